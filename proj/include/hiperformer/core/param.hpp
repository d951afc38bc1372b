#pragma once

#include <random>

#include "hiperformer/core/tensor.hpp"

namespace hipf {

using Rng = std::mt19937_64;

// Truncated normal: resample anything beyond two standard deviations.
template <typename T>
void init_trunc_normal(Tensor<T>& t, Rng& rng, T std_dev) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(std_dev));
    for (auto& v : t.data()) {
        double x;
        do { x = dist(rng); } while (std::abs(x) > 2.0 * static_cast<double>(std_dev));
        v = static_cast<T>(x);
    }
}

template <typename T>
void init_kaiming_uniform(Tensor<T>& t, Rng& rng, i64 fan_in) {
    double bound = std::sqrt(6.0 / static_cast<double>(std::max<i64>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

template <typename T>
void init_uniform(Tensor<T>& t, Rng& rng, T lo, T hi) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

// Owns the name -> tensor mapping for every learnable parameter and every
// persistent buffer (running BN stats). Registration order is fixed by
// construction order, which keeps checkpoints and optimizer state deterministic.
template <typename T>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

    Rng& rng() { return rng_; }

    Tensor<T> param(const std::string& name, const Shape& shape) {
        Tensor<T> t = Tensor<T>::zeros(shape, /*requires_grad=*/true);
        params_.emplace_back(name, t);
        return t;
    }

    Tensor<T> buffer(const std::string& name, const Shape& shape, T fill) {
        Tensor<T> t = Tensor<T>::filled(shape, fill, /*requires_grad=*/false);
        buffers_.emplace_back(name, t);
        return t;
    }

    std::vector<std::pair<std::string, Tensor<T>>>& params() { return params_; }
    const std::vector<std::pair<std::string, Tensor<T>>>& params() const { return params_; }
    std::vector<std::pair<std::string, Tensor<T>>>& buffers() { return buffers_; }
    const std::vector<std::pair<std::string, Tensor<T>>>& buffers() const { return buffers_; }

    i64 count_scalars() const {
        i64 n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

private:
    Rng rng_;
    std::vector<std::pair<std::string, Tensor<T>>> params_;
    std::vector<std::pair<std::string, Tensor<T>>> buffers_;
};

}  // namespace hipf
