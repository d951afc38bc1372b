#pragma once

#include <array>

#include "hiperformer/model/config.hpp"
#include "hiperformer/model/layers.hpp"

namespace hipf {

// f(.) of the PMI cascade: 3x3 conv -> BN -> ReLU -> 1x1 conv.
template <typename T>
struct PmiAdjust {
    ConvBnRelu<T> conv3;
    Conv2dLayer<T> conv1;

    PmiAdjust() = default;

    PmiAdjust(ParamStore<T>& ps, const std::string& name, i64 in_ch, i64 out_ch) {
        ConvSpec sp{.stride = 1, .pad = 1, .dilation = 1, .groups = 1};
        conv3 = ConvBnRelu<T>(ps, name + ".conv3", in_ch, out_ch, 3, sp);
        conv1 = Conv2dLayer<T>(ps, name + ".conv1", out_ch, out_ch, 1);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        return conv1.forward(conv3.forward(x, training));
    }
};

// Progressive multiplicative integration down the feature pyramid:
//   y_4 = x_4;  y_i = f(x_i) * f(Up(y_{i+1})) for i = 3, 2, 1.
template <typename T>
struct Pmi {
    std::array<PmiAdjust<T>, 3> f_enc, f_up;  // levels 1..3 (0-based 0..2)

    Pmi() = default;

    Pmi(ParamStore<T>& ps, const std::string& name, const std::array<i64, 4>& widths) {
        for (int i = 0; i < 3; ++i) {
            auto iu = static_cast<std::size_t>(i);
            f_enc[iu] = PmiAdjust<T>(ps, name + ".enc" + std::to_string(i), widths[iu], widths[iu]);
            f_up[iu] = PmiAdjust<T>(ps, name + ".up" + std::to_string(i), widths[iu + 1], widths[iu]);
        }
    }

    std::array<Tensor<T>, 4> forward(const std::array<Tensor<T>, 4>& x, bool training) {
        std::array<Tensor<T>, 4> y;
        y[3] = x[3];  // identity at the deepest level
        for (int i = 2; i >= 0; --i) {
            auto iu = static_cast<std::size_t>(i);
            Tensor<T> up = resize2d(y[iu + 1], 2, ResizeMode::Bilinear);
            y[iu] = mul(f_enc[iu].forward(x[iu], training), f_up[iu].forward(up, training));
        }
        return y;
    }
};

// Enhanced attention gate: d + d * Sigmoid(Conv1x1(ReLU(F_e + F_d))),
// F_e/F_d from grouped 1x1 conv + BN + ReLU on the bridge/decoder features.
template <typename T>
struct Eag {
    Conv2dLayer<T> proj_e, proj_d, gate;
    BatchNorm2dLayer<T> bn_e, bn_d;

    Eag() = default;

    Eag(ParamStore<T>& ps, const std::string& name, i64 channels, i64 groups) {
        require(channels % groups == 0, "EAG: groups must divide channels");
        ConvSpec gp{.stride = 1, .pad = 0, .dilation = 1, .groups = groups};
        proj_e = Conv2dLayer<T>(ps, name + ".proj_e", channels, channels, 1, gp);
        proj_d = Conv2dLayer<T>(ps, name + ".proj_d", channels, channels, 1, gp);
        bn_e = BatchNorm2dLayer<T>(ps, name + ".bn_e", channels);
        bn_d = BatchNorm2dLayer<T>(ps, name + ".bn_d", channels);
        gate = Conv2dLayer<T>(ps, name + ".gate", channels, channels, 1);
    }

    Tensor<T> forward(const Tensor<T>& e, const Tensor<T>& d, bool training) {
        require(e.shape() == d.shape(), "EAG: bridge/decoder shape mismatch");
        Tensor<T> fe = relu(bn_e.forward(proj_e.forward(e), training));
        Tensor<T> fd = relu(bn_d.forward(proj_d.forward(d), training));
        Tensor<T> g = sigmoid(gate.forward(relu(add(fe, fd))));
        return add(d, mul(d, g));
    }
};

// Pyramid split attention: four channel groups convolved at scales 3/5/7/9,
// a shared squeeze-excitation head per group, softmax across scales per
// channel slot, then re-weighted concatenation.
template <typename T>
struct Psa {
    std::array<Conv2dLayer<T>, 4> scale_convs;
    LinearLayer<T> se_reduce, se_expand;
    i64 split = 0;

    Psa() = default;

    Psa(ParamStore<T>& ps, const std::string& name, i64 channels) {
        require(channels % 4 == 0, "PSA: channels must be divisible by 4");
        split = channels / 4;
        const i64 kernels[4] = {3, 5, 7, 9};
        const i64 wanted_groups[4] = {1, 4, 8, 16};
        for (int j = 0; j < 4; ++j) {
            i64 g = wanted_groups[j];
            while (split % g != 0) g /= 2;  // largest cited group count that divides the split
            ConvSpec sp{.stride = 1, .pad = kernels[j] / 2, .dilation = 1, .groups = g};
            scale_convs[static_cast<std::size_t>(j)] =
                Conv2dLayer<T>(ps, name + ".scale" + std::to_string(j), split, split, kernels[j], sp);
        }
        i64 hidden = std::max<i64>(split / 4, 1);
        se_reduce = LinearLayer<T>(ps, name + ".se_reduce", split, hidden);
        se_expand = LinearLayer<T>(ps, name + ".se_expand", hidden, split);
    }

    // Per-scale attention weights, shape [N, 4, split]; rows over axis 1 sum to 1.
    Tensor<T> scale_weights(const std::array<Tensor<T>, 4>& feats) const {
        i64 HW = feats[0].dim(2) * feats[0].dim(3);
        std::vector<Tensor<T>> logits;
        for (const auto& f : feats) {
            Tensor<T> pooled = mul_scalar(reduce_sum(reduce_sum(f, 3), 2), T(1) / T(HW));  // [N, split]
            Tensor<T> z = sigmoid(se_expand.forward(relu(se_reduce.forward(pooled))));
            logits.push_back(reshape(z, {z.dim(0), 1, split}));
        }
        return softmax(concat(logits, 1), 1);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        i64 N = x.dim(0), C = x.dim(1);
        require(C == 4 * split, "PSA: channel count mismatch");
        std::array<Tensor<T>, 4> feats;
        for (int j = 0; j < 4; ++j)
            feats[static_cast<std::size_t>(j)] =
                scale_convs[static_cast<std::size_t>(j)].forward(slice(x, 1, j * split, split));
        Tensor<T> w = scale_weights(feats);
        std::vector<Tensor<T>> parts;
        for (int j = 0; j < 4; ++j) {
            Tensor<T> wj = reshape(slice(w, 1, j, 1), {N, split});
            parts.push_back(mul_channel(feats[static_cast<std::size_t>(j)], wj));
        }
        return concat(parts, 1);
    }
};

// PGA = PSA over the EAG-gated decoder feature.
template <typename T>
struct Pga {
    Eag<T> eag;
    Psa<T> psa;

    Pga() = default;

    Pga(ParamStore<T>& ps, const std::string& name, i64 channels, i64 eag_groups)
        : eag(ps, name + ".eag", channels, eag_groups), psa(ps, name + ".psa", channels) {}

    Tensor<T> forward(const Tensor<T>& e, const Tensor<T>& d, bool training) {
        return psa.forward(eag.forward(e, d, training));
    }
};

}  // namespace hipf
