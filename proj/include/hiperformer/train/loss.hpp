#pragma once

#include "hiperformer/core/nn_ops.hpp"

namespace hipf {

// Integer class-id raster; the I/O currency of the training harness.
struct LabelMap {
    i64 height = 0, width = 0;
    std::vector<int> ids;  // row-major, values in [0, num_classes)

    LabelMap() = default;
    LabelMap(i64 h, i64 w) : height(h), width(w), ids(static_cast<std::size_t>(h * w), 0) {}

    int& at(i64 y, i64 x) { return ids[static_cast<std::size_t>(y * width + x)]; }
    int at(i64 y, i64 x) const { return ids[static_cast<std::size_t>(y * width + x)]; }
};

struct LossConfig {
    double alpha = 0.5;     // CE weight; (1 - alpha) goes to Dice
    double smooth = 1e-5;   // Dice smoothing term

    void validate() const {
        require(alpha >= 0.0 && alpha <= 1.0, "LossConfig: alpha must lie in [0,1]");
        require(smooth > 0.0, "LossConfig: smooth must be positive");
    }
};

// One-hot encoding of a batch of label maps, as a constant (no-grad) tensor.
template <typename T>
Tensor<T> one_hot(const std::vector<LabelMap>& targets, i64 num_classes) {
    require(!targets.empty(), "one_hot: empty batch");
    i64 N = static_cast<i64>(targets.size());
    i64 H = targets[0].height, W = targets[0].width;
    Tensor<T> out = Tensor<T>::zeros({N, num_classes, H, W});
    auto& ov = out.data();
    for (i64 n = 0; n < N; ++n) {
        require(targets[static_cast<std::size_t>(n)].height == H &&
                    targets[static_cast<std::size_t>(n)].width == W,
                "one_hot: inconsistent label extents");
        for (i64 p = 0; p < H * W; ++p) {
            int c = targets[static_cast<std::size_t>(n)].ids[static_cast<std::size_t>(p)];
            require(c >= 0 && c < num_classes, "one_hot: class id out of range");
            ov[static_cast<std::size_t>((n * num_classes + c) * H * W + p)] = T(1);
        }
    }
    return out;
}

// Mean pixelwise cross-entropy between logits [N,C,H,W] and integer targets.
template <typename T>
Tensor<T> ce_loss(const Tensor<T>& logits, const std::vector<LabelMap>& targets) {
    i64 N = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    Tensor<T> oh = one_hot<T>(targets, C);
    require(oh.dim(0) == N && oh.dim(2) == H && oh.dim(3) == W, "ce_loss: target extent mismatch");
    Tensor<T> lp = log_softmax(logits, 1);
    Tensor<T> picked = sum_all(mul(oh, lp));
    return mul_scalar(picked, T(-1) / T(N * H * W));
}

// Soft multi-class Dice loss on channel-normalized probabilities,
// 1 - mean_c (2|X∩Y| + eps) / (|X| + |Y| + eps).
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const std::vector<LabelMap>& targets, T smooth) {
    i64 C = probs.dim(1);
    Tensor<T> oh = one_hot<T>(targets, C);
    auto per_class = [](const Tensor<T>& x) {
        return reduce_sum(reduce_sum(reduce_sum(x, 3), 2), 0);  // -> [C]
    };
    Tensor<T> inter = per_class(mul(probs, oh));
    Tensor<T> denom = add(per_class(probs), per_class(oh));
    Tensor<T> dice = div(add_scalar(mul_scalar(inter, T(2)), smooth), add_scalar(denom, smooth));
    return add_scalar(mul_scalar(mean_all(dice), T(-1)), T(1));
}

template <typename T>
Tensor<T> dice_loss_from_logits(const Tensor<T>& logits, const std::vector<LabelMap>& targets, T smooth) {
    return dice_loss(softmax(logits, 1), targets, smooth);
}

// alpha * L_CE + (1 - alpha) * L_Dice
template <typename T>
Tensor<T> combined_loss(const Tensor<T>& logits, const std::vector<LabelMap>& targets,
                        const LossConfig& cfg) {
    cfg.validate();
    Tensor<T> ce = ce_loss(logits, targets);
    Tensor<T> dice = dice_loss_from_logits(logits, targets, static_cast<T>(cfg.smooth));
    return add(mul_scalar(ce, static_cast<T>(cfg.alpha)), mul_scalar(dice, static_cast<T>(1.0 - cfg.alpha)));
}

// Hard prediction from logits.
template <typename T>
std::vector<LabelMap> argmax_labels(const Tensor<T>& logits) {
    i64 N = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    std::vector<LabelMap> out;
    const auto& v = logits.data();
    for (i64 n = 0; n < N; ++n) {
        LabelMap m(H, W);
        for (i64 p = 0; p < H * W; ++p) {
            int best = 0;
            T bv = v[static_cast<std::size_t>((n * C) * H * W + p)];
            for (i64 c = 1; c < C; ++c) {
                T x = v[static_cast<std::size_t>((n * C + c) * H * W + p)];
                if (x > bv) { bv = x; best = static_cast<int>(c); }
            }
            m.ids[static_cast<std::size_t>(p)] = best;
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace hipf
