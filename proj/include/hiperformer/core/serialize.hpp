#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>

#include "hiperformer/core/tensor.hpp"

namespace hipf {

// Binary tensor file: magic "HTSR", u8 version, u8 dtype (0 = f32), u8 rank,
// little-endian u32 extents, then little-endian IEEE-754 f32 payload.

namespace detail {
inline void put_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace detail

template <typename T>
void save_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write("HTSR", 4);
    unsigned char header[3] = {1 /*version*/, 0 /*f32*/, static_cast<unsigned char>(t.rank())};
    os.write(reinterpret_cast<const char*>(header), 3);
    for (i64 d : t.shape()) detail::put_u32_le(os, static_cast<std::uint32_t>(d));
    for (T v : t.data()) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32_le(os, bits);
    }
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "save_tensor: cannot open " + path);
    save_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "HTSR", 4) == 0, "load_tensor: bad magic");
    unsigned char header[3];
    is.read(reinterpret_cast<char*>(header), 3);
    require(header[0] == 1, "load_tensor: unsupported version");
    require(header[1] == 0, "load_tensor: unsupported dtype tag");
    int rank = header[2];
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = static_cast<i64>(detail::get_u32_le(is));
    std::vector<T> data(static_cast<std::size_t>(numel(shape)));
    for (auto& v : data) {
        std::uint32_t bits = detail::get_u32_le(is);
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<T>(f);
    }
    require(is.good(), "load_tensor: truncated file");
    return Tensor<T>::from_data(shape, std::move(data));
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "load_tensor: cannot open " + path);
    return load_tensor<T>(is);
}

}  // namespace hipf
