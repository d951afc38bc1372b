#pragma once

#include <cstring>
#include <fstream>

#include <zlib.h>

#include "hiperformer/core/tensor.hpp"

namespace hipf {

// Minimal 8-bit PNG support (grayscale and RGB, non-interlaced), enough for
// dataset images and class-id label rasters.
struct ImageU8 {
    i64 height = 0, width = 0, channels = 1;
    std::vector<unsigned char> pixels;  // row-major, interleaved

    unsigned char& at(i64 y, i64 x, i64 c = 0) {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
    unsigned char at(i64 y, i64 x, i64 c = 0) const {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
};

namespace detail {

inline void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

inline std::uint32_t get_be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void png_chunk(std::vector<unsigned char>& out, const char type[4],
                      const std::vector<unsigned char>& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    put_be32(out, crc);
}

inline unsigned char paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<unsigned char>(a);
    if (pb <= pc) return static_cast<unsigned char>(b);
    return static_cast<unsigned char>(c);
}

}  // namespace detail

inline std::vector<unsigned char> encode_png(const ImageU8& img) {
    require(img.channels == 1 || img.channels == 3, "encode_png: only gray8/rgb8 supported");
    i64 stride = img.width * img.channels;
    // filter byte 0 per scanline
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.height * (stride + 1)));
    for (i64 y = 0; y < img.height; ++y) {
        raw[static_cast<std::size_t>(y * (stride + 1))] = 0;
        std::memcpy(raw.data() + y * (stride + 1) + 1, img.pixels.data() + y * stride,
                    static_cast<std::size_t>(stride));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    require(compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) == Z_OK,
            "encode_png: deflate failed");
    compressed.resize(bound);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<unsigned char> ihdr;
    detail::put_be32(ihdr, static_cast<std::uint32_t>(img.width));
    detail::put_be32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                                             // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);                     // gray / rgb
    ihdr.push_back(0); ihdr.push_back(0); ihdr.push_back(0);       // deflate, adaptive, no interlace
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", compressed);
    detail::png_chunk(out, "IEND", {});
    return out;
}

inline void write_png(const std::string& path, const ImageU8& img) {
    auto bytes = encode_png(img);
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "write_png: cannot open " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline ImageU8 decode_png(const std::vector<unsigned char>& bytes) {
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    require(bytes.size() > 8 && std::memcmp(bytes.data(), sig, 8) == 0, "decode_png: not a PNG");
    ImageU8 img;
    std::vector<unsigned char> compressed;
    std::size_t pos = 8;
    int bit_depth = 0, color_type = 0;
    while (pos + 8 <= bytes.size()) {
        std::uint32_t len = detail::get_be32(bytes.data() + pos);
        require(pos + 12 + len <= bytes.size(), "decode_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const unsigned char* payload = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            img.width = detail::get_be32(payload);
            img.height = detail::get_be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            require(bit_depth == 8 && (color_type == 0 || color_type == 2),
                    "decode_png: only 8-bit gray/rgb supported");
            require(payload[12] == 0, "decode_png: interlaced PNG unsupported");
            img.channels = color_type == 0 ? 1 : 3;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            compressed.insert(compressed.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    i64 stride = img.width * img.channels;
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.height * (stride + 1)));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    require(uncompress(raw.data(), &raw_len, compressed.data(), static_cast<uLong>(compressed.size())) == Z_OK &&
                raw_len == raw.size(),
            "decode_png: inflate failed");
    img.pixels.resize(static_cast<std::size_t>(img.height * stride));
    i64 bpp = img.channels;
    for (i64 y = 0; y < img.height; ++y) {
        unsigned char filter = raw[static_cast<std::size_t>(y * (stride + 1))];
        const unsigned char* src = raw.data() + y * (stride + 1) + 1;
        unsigned char* cur = img.pixels.data() + y * stride;
        const unsigned char* up = y > 0 ? img.pixels.data() + (y - 1) * stride : nullptr;
        for (i64 x = 0; x < stride; ++x) {
            int a = x >= bpp ? cur[x - bpp] : 0;
            int b = up ? up[x] : 0;
            int c = (up && x >= bpp) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: fail("decode_png: unknown filter type");
            }
            cur[x] = static_cast<unsigned char>(v & 0xFF);
        }
    }
    return img;
}

inline ImageU8 read_png(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "read_png: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace hipf
