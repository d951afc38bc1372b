#pragma once

#include "hiperformer/core/param.hpp"

namespace hipf {

// Cosine annealing: eta_min + (lr0 - eta_min) * (1 + cos(pi t / T_max)) / 2,
// clamped at T_max.
inline double cosine_lr(i64 t, i64 t_max, double lr0, double eta_min) {
    require(t >= 0 && t_max > 0, "cosine_lr: bad step/T_max");
    if (t == 0) return lr0;           // exact endpoints regardless of rounding
    if (t >= t_max) return eta_min;
    double u = static_cast<double>(t) / static_cast<double>(t_max);
    return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + std::cos(M_PI * u));
}

// Scales all gradients so the global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(std::vector<std::pair<std::string, Tensor<T>>>& params, double max_norm) {
    require(max_norm > 0.0, "clip_grad_norm: max_norm must be positive");
    double sq = 0.0;
    for (auto& [name, p] : params)
        for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    double norm = std::sqrt(sq);
    if (norm > max_norm) {
        T scale = static_cast<T>(max_norm / norm);
        for (auto& [name, p] : params)
            for (T& g : p.grad()) g *= scale;
    }
    return norm;
}

// AdamW with decoupled weight decay: decay is applied directly to the
// parameter, separately from the bias-corrected adaptive step.
template <typename T>
class AdamW {
public:
    struct Hyper {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 5e-4;
    };

    explicit AdamW(std::vector<std::pair<std::string, Tensor<T>>>& params, Hyper hyper = {})
        : params_(&params), hyper_(hyper) {
        for (auto& [name, p] : params) {
            m_.emplace_back(p.size(), T(0));
            v_.emplace_back(p.size(), T(0));
        }
    }

    void step(double lr) {
        ++t_;
        double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
        for (std::size_t pi = 0; pi < params_->size(); ++pi) {
            auto& p = (*params_)[pi].second;
            if (p.grad().size() != p.data().size()) p.zero_grad();
            auto &m = m_[pi], &v = v_[pi];
            for (std::size_t i = 0; i < p.data().size(); ++i) {
                double g = static_cast<double>(p.grad()[i]);
                double mi = hyper_.beta1 * static_cast<double>(m[i]) + (1.0 - hyper_.beta1) * g;
                double vi = hyper_.beta2 * static_cast<double>(v[i]) + (1.0 - hyper_.beta2) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                double update = (mi / bc1) / (std::sqrt(vi / bc2) + hyper_.eps);
                double val = static_cast<double>(p.data()[i]);
                val -= lr * hyper_.weight_decay * val;  // decoupled decay
                val -= lr * update;
                p.data()[i] = static_cast<T>(val);
            }
        }
    }

    i64 steps_taken() const { return t_; }

private:
    std::vector<std::pair<std::string, Tensor<T>>>* params_;
    Hyper hyper_;
    i64 t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace hipf
