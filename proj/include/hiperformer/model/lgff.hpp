#pragma once

#include "hiperformer/model/config.hpp"
#include "hiperformer/model/layers.hpp"

namespace hipf {

// Adaptive channel interaction: residual channel-affinity attention.
// x + R(Softmax(R(x) . R&T(x)) . R(x)) with a C x C affinity per batch item.
template <typename T>
Tensor<T> aci(const Tensor<T>& x) {
    i64 N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> flat = reshape(x, {N, C, H * W});
    Tensor<T> affinity = matmul(flat, permute(flat, {0, 2, 1}));  // [N, C, C]
    affinity = softmax(affinity, -1);                             // row-wise over target channels
    Tensor<T> mixed = matmul(affinity, flat);
    return add(x, reshape(mixed, x.shape()));
}

// Spatial perception enhancement: sigmoid gate from two stacked 7x7 convs,
// channel plan C -> C/r -> C.
template <typename T>
struct Spe {
    Conv2dLayer<T> reduce, restore;

    Spe() = default;

    Spe(ParamStore<T>& ps, const std::string& name, i64 channels, i64 r) {
        require(channels % r == 0, "SPE: reduction ratio must divide channels");
        ConvSpec sp{.stride = 1, .pad = 3, .dilation = 1, .groups = 1};
        reduce = Conv2dLayer<T>(ps, name + ".reduce", channels, channels / r, 7, sp);
        restore = Conv2dLayer<T>(ps, name + ".restore", channels / r, channels, 7, sp);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> gate = sigmoid(restore.forward(reduce.forward(x)));
        return mul(x, gate);
    }
};

// Inverted-residual MLP: depthwise 3x3 with residual, pointwise expansion
// (x4, GELU), pointwise projection to the output width.
template <typename T>
struct Irmlp {
    Conv2dLayer<T> dw, expand, project;

    Irmlp() = default;

    Irmlp(ParamStore<T>& ps, const std::string& name, i64 in_ch, i64 out_ch, i64 expansion = 4) {
        ConvSpec dw_spec{.stride = 1, .pad = 1, .dilation = 1, .groups = in_ch};
        dw = Conv2dLayer<T>(ps, name + ".dw", in_ch, in_ch, 3, dw_spec);
        expand = Conv2dLayer<T>(ps, name + ".expand", in_ch, expansion * in_ch, 1);
        project = Conv2dLayer<T>(ps, name + ".project", expansion * in_ch, out_ch, 1);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> inner = add(dw.forward(x), x);
        return project.forward(gelu(expand.forward(inner)));
    }
};

// Local-global feature fusion for one encoder stage.
//   F_mid1 = Avgpool(Conv1x1(F_prev))          (zeros at stage 1)
//   F_mid2 = Conv1x1(Concat[L, F_mid1, G])
//   F      = IRMLP(Concat[ACI(L), F_mid2, SPE(G)]) + F_mid1
template <typename T>
struct Lgff {
    Conv2dLayer<T> prev_align;  // absent at stage 1
    Conv2dLayer<T> mid_reduce;
    Spe<T> spe;
    Irmlp<T> irmlp;
    bool has_prev = false;

    Lgff() = default;

    Lgff(ParamStore<T>& ps, const std::string& name, i64 width, i64 prev_width, i64 spe_r) {
        has_prev = prev_width > 0;
        if (has_prev) prev_align = Conv2dLayer<T>(ps, name + ".prev_align", prev_width, width, 1);
        mid_reduce = Conv2dLayer<T>(ps, name + ".mid_reduce", 3 * width, width, 1);
        spe = Spe<T>(ps, name + ".spe", width, spe_r);
        irmlp = Irmlp<T>(ps, name + ".irmlp", 3 * width, width);
    }

    Tensor<T> forward(const Tensor<T>& local_feat, const Tensor<T>& global_feat,
                      const Tensor<T>& fused_prev) const {
        require(local_feat.shape() == global_feat.shape(), "LGFF: local/global extent mismatch");
        Tensor<T> mid1;
        if (fused_prev.defined()) {
            require(has_prev, "LGFF: stage 1 received a previous fused feature");
            require(fused_prev.dim(2) == 2 * local_feat.dim(2) && fused_prev.dim(3) == 2 * local_feat.dim(3),
                    "LGFF: previous fused feature must sit at double resolution");
            mid1 = pool2d(prev_align.forward(fused_prev), PoolKind::Avg, 2, 2, 2);
        } else {
            mid1 = Tensor<T>::zeros(local_feat.shape());
        }
        Tensor<T> mid2 = mid_reduce.forward(concat<T>({local_feat, mid1, global_feat}, 1));
        Tensor<T> fused = irmlp.forward(concat<T>({aci(local_feat), mid2, spe.forward(global_feat)}, 1));
        return add(fused, mid1);
    }
};

}  // namespace hipf
