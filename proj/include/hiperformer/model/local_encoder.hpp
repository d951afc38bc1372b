#pragma once

#include <array>

#include "hiperformer/model/config.hpp"
#include "hiperformer/model/layers.hpp"

namespace hipf {

// Dual-channel residual block: a plain 3x3 branch and a dilated 3x3 branch,
// each applied twice with a residual, merged by a 1x1 conv.
template <typename T>
struct DuChResBlock {
    ConvBnRelu<T> std1, std2, dil1, dil2;
    Conv2dLayer<T> merge;

    DuChResBlock() = default;

    DuChResBlock(ParamStore<T>& ps, const std::string& name, i64 channels, i64 dilation) {
        ConvSpec std_spec{.stride = 1, .pad = 1, .dilation = 1, .groups = 1};
        ConvSpec dil_spec{.stride = 1, .pad = dilation, .dilation = dilation, .groups = 1};
        std1 = ConvBnRelu<T>(ps, name + ".std1", channels, channels, 3, std_spec);
        std2 = ConvBnRelu<T>(ps, name + ".std2", channels, channels, 3, std_spec);
        dil1 = ConvBnRelu<T>(ps, name + ".dil1", channels, channels, 3, dil_spec);
        dil2 = ConvBnRelu<T>(ps, name + ".dil2", channels, channels, 3, dil_spec);
        merge = Conv2dLayer<T>(ps, name + ".merge", 2 * channels, channels, 1);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> t = add(x, std2.forward(std1.forward(x, training), training));
        Tensor<T> d = add(x, dil2.forward(dil1.forward(x, training), training));
        return merge.forward(concat<T>({t, d}, 1));
    }
};

// Local branch: 7x7 stride-2 stem, then four stages of 2x2 max-pool followed
// by a DuChResBlock. Stage s output sits at 1/2^(s+2) of the input extent.
template <typename T>
struct LocalEncoder {
    ConvBnRelu<T> stem;
    std::array<Conv2dLayer<T>, 4> widen;  // 1x1 channel adjustment before each block
    std::array<DuChResBlock<T>, 4> blocks;
    std::array<i64, 4> widths;

    LocalEncoder() = default;

    LocalEncoder(ParamStore<T>& ps, const std::string& name, const ModelConfig& cfg) {
        widths = cfg.widths;
        ConvSpec stem_spec{.stride = 2, .pad = 3, .dilation = 1, .groups = 1};
        stem = ConvBnRelu<T>(ps, name + ".stem", cfg.in_channels, cfg.widths[0], 7, stem_spec);
        i64 prev = cfg.widths[0];
        for (int s = 0; s < 4; ++s) {
            i64 w = cfg.widths[static_cast<std::size_t>(s)];
            widen[static_cast<std::size_t>(s)] =
                Conv2dLayer<T>(ps, name + ".widen" + std::to_string(s), prev, w, 1);
            blocks[static_cast<std::size_t>(s)] =
                DuChResBlock<T>(ps, name + ".block" + std::to_string(s), w, cfg.dilation);
            prev = w;
        }
    }

    Tensor<T> forward_stem(const Tensor<T>& image, bool training) {
        require(image.dim(2) % 32 == 0 && image.dim(3) % 32 == 0,
                "LocalEncoder: input extents must be divisible by 32");
        return stem.forward(image, training);
    }

    std::array<Tensor<T>, 4> forward(const Tensor<T>& image, bool training) {
        Tensor<T> x = forward_stem(image, training);
        std::array<Tensor<T>, 4> outs;
        for (int s = 0; s < 4; ++s) {
            x = pool2d(x, PoolKind::Max, 2, 2, 2);
            x = widen[static_cast<std::size_t>(s)].forward(x);
            x = blocks[static_cast<std::size_t>(s)].forward(x, training);
            outs[static_cast<std::size_t>(s)] = x;
        }
        return outs;
    }
};

}  // namespace hipf
