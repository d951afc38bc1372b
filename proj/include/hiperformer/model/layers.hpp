#pragma once

#include "hiperformer/core/nn_ops.hpp"
#include "hiperformer/core/param.hpp"

namespace hipf {

// Small owned-parameter wrappers over the functional ops. All layers are
// templated on the scalar type so a double instantiation can shadow the
// float training path for gradient checks.

template <typename T>
struct Conv2dLayer {
    Tensor<T> weight, bias;
    ConvSpec spec;

    Conv2dLayer() = default;

    Conv2dLayer(ParamStore<T>& ps, const std::string& name, i64 in_ch, i64 out_ch, i64 kernel,
                ConvSpec sp = {}, bool with_bias = true)
        : spec(sp) {
        require(in_ch % sp.groups == 0, "Conv2dLayer: in_ch not divisible by groups");
        weight = ps.param(name + ".weight", {out_ch, in_ch / sp.groups, kernel, kernel});
        i64 fan_in = (in_ch / sp.groups) * kernel * kernel;
        init_kaiming_uniform(weight, ps.rng(), fan_in);
        if (with_bias) bias = ps.param(name + ".bias", {out_ch});
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, spec); }
};

template <typename T>
struct BatchNorm2dLayer {
    Tensor<T> gamma, beta, running_mean, running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    BatchNorm2dLayer() = default;

    BatchNorm2dLayer(ParamStore<T>& ps, const std::string& name, i64 channels) {
        gamma = ps.param(name + ".gamma", {channels});
        std::fill(gamma.data().begin(), gamma.data().end(), T(1));
        beta = ps.param(name + ".beta", {channels});
        running_mean = ps.buffer(name + ".running_mean", {channels}, T(0));
        running_var = ps.buffer(name + ".running_var", {channels}, T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
    }
};

// conv -> BN -> ReLU, the default conv unit throughout the network.
template <typename T>
struct ConvBnRelu {
    Conv2dLayer<T> conv;
    BatchNorm2dLayer<T> bn;

    ConvBnRelu() = default;

    ConvBnRelu(ParamStore<T>& ps, const std::string& name, i64 in_ch, i64 out_ch, i64 kernel,
               ConvSpec sp = {})
        : conv(ps, name + ".conv", in_ch, out_ch, kernel, sp), bn(ps, name + ".bn", out_ch) {}

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        return relu(bn.forward(conv.forward(x), training));
    }
};

template <typename T>
struct LinearLayer {
    Tensor<T> weight, bias;

    LinearLayer() = default;

    LinearLayer(ParamStore<T>& ps, const std::string& name, i64 in_f, i64 out_f, bool with_bias = true) {
        weight = ps.param(name + ".weight", {out_f, in_f});
        init_trunc_normal(weight, ps.rng(), T(0.02));
        if (with_bias) bias = ps.param(name + ".bias", {out_f});
    }

    Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
struct LayerNormLayer {
    Tensor<T> gamma, beta;
    T eps = T(1e-5);

    LayerNormLayer() = default;

    LayerNormLayer(ParamStore<T>& ps, const std::string& name, i64 channels) {
        gamma = ps.param(name + ".gamma", {channels});
        std::fill(gamma.data().begin(), gamma.data().end(), T(1));
        beta = ps.param(name + ".beta", {channels});
    }

    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
};

// [N,C,H,W] <-> [N,HW,C] conversions used at the CNN/transformer boundary.
template <typename T>
Tensor<T> map_to_tokens(const Tensor<T>& x) {
    i64 N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    return permute(reshape(x, {N, C, H * W}), {0, 2, 1});
}

template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& t, i64 H, i64 W) {
    i64 N = t.dim(0), C = t.dim(2);
    return reshape(permute(t, {0, 2, 1}), {N, C, H, W});
}

}  // namespace hipf
