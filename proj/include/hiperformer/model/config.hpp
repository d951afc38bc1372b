#pragma once

#include <array>

#include <json.hpp>

#include "hiperformer/core/tensor.hpp"

namespace hipf {

// Every architectural knob in one place. Desk defaults keep the whole model
// trainable on a laptop CPU; the paper preset restores publication scale.
struct ModelConfig {
    std::array<i64, 4> widths{8, 16, 32, 64};
    std::array<i64, 4> global_depths{2, 2, 2, 2};
    std::array<i64, 4> heads{1, 1, 2, 4};
    i64 window = 4;
    i64 dilation = 2;          // DuChResBlock dilated-branch rate
    i64 spe_reduction = 4;     // SPE channel reduction ratio r
    i64 mlp_ratio = 4;
    i64 num_classes = 4;
    i64 in_channels = 3;
    i64 input_extent = 64;
    i64 patch_size = 4;
    i64 eag_groups = 4;
    bool rel_pos_bias = true;
    bool qkv_bias = true;
    // Ablation switches (Table-XII style rows).
    bool use_local = true;
    bool use_global = true;
    bool use_lgff = true;
    bool use_pmi = true;
    bool use_pga = true;

    static ModelConfig desk() { return ModelConfig{}; }

    static ModelConfig paper_scale() {
        ModelConfig c;
        c.widths = {96, 192, 384, 768};
        c.global_depths = {2, 2, 18, 2};
        c.heads = {6, 12, 24, 48};
        c.window = 7;
        c.input_extent = 224;
        c.num_classes = 9;
        return c;
    }

    void validate() const {
        require(input_extent % 32 == 0, "ModelConfig: input extent must be divisible by 32");
        require(num_classes >= 2, "ModelConfig: need at least 2 classes");
        require(use_local || use_global, "ModelConfig: at least one encoder branch must be active");
        for (int i = 0; i < 4; ++i) {
            require(widths[static_cast<std::size_t>(i)] > 0, "ModelConfig: non-positive width");
            require(global_depths[static_cast<std::size_t>(i)] > 0 || !use_global,
                    "ModelConfig: zero-depth global stage");
            require(global_depths[static_cast<std::size_t>(i)] % 2 == 0 || !use_global,
                    "ModelConfig: global stage depth must be even (W-MSA/SW-MSA pairs)");
            require(widths[static_cast<std::size_t>(i)] % heads[static_cast<std::size_t>(i)] == 0,
                    "ModelConfig: heads must divide width");
            require(widths[static_cast<std::size_t>(i)] % spe_reduction == 0,
                    "ModelConfig: SPE reduction must divide width");
            require(widths[static_cast<std::size_t>(i)] % 4 == 0,
                    "ModelConfig: widths must be divisible by 4 (PSA splits, EAG groups)");
            if (i > 0)
                require(widths[static_cast<std::size_t>(i)] >= widths[static_cast<std::size_t>(i - 1)],
                        "ModelConfig: widths must be non-decreasing");
        }
        require(dilation >= 1, "ModelConfig: dilation must be >= 1");
        require(window >= 1 && patch_size >= 1, "ModelConfig: bad window/patch size");
    }

    // Spatial extent of encoder stage s (0-based) for a square input.
    i64 stage_extent(int s) const { return input_extent >> (s + 2); }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"widths", c.widths},
                       {"global_depths", c.global_depths},
                       {"heads", c.heads},
                       {"window", c.window},
                       {"dilation", c.dilation},
                       {"spe_reduction", c.spe_reduction},
                       {"mlp_ratio", c.mlp_ratio},
                       {"num_classes", c.num_classes},
                       {"in_channels", c.in_channels},
                       {"input_extent", c.input_extent},
                       {"patch_size", c.patch_size},
                       {"eag_groups", c.eag_groups},
                       {"rel_pos_bias", c.rel_pos_bias},
                       {"qkv_bias", c.qkv_bias},
                       {"use_local", c.use_local},
                       {"use_global", c.use_global},
                       {"use_lgff", c.use_lgff},
                       {"use_pmi", c.use_pmi},
                       {"use_pga", c.use_pga}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.widths = j.value("widths", d.widths);
    c.global_depths = j.value("global_depths", d.global_depths);
    c.heads = j.value("heads", d.heads);
    c.window = j.value("window", d.window);
    c.dilation = j.value("dilation", d.dilation);
    c.spe_reduction = j.value("spe_reduction", d.spe_reduction);
    c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
    c.num_classes = j.value("num_classes", d.num_classes);
    c.in_channels = j.value("in_channels", d.in_channels);
    c.input_extent = j.value("input_extent", d.input_extent);
    c.patch_size = j.value("patch_size", d.patch_size);
    c.eag_groups = j.value("eag_groups", d.eag_groups);
    c.rel_pos_bias = j.value("rel_pos_bias", d.rel_pos_bias);
    c.qkv_bias = j.value("qkv_bias", d.qkv_bias);
    c.use_local = j.value("use_local", d.use_local);
    c.use_global = j.value("use_global", d.use_global);
    c.use_lgff = j.value("use_lgff", d.use_lgff);
    c.use_pmi = j.value("use_pmi", d.use_pmi);
    c.use_pga = j.value("use_pga", d.use_pga);
}

}  // namespace hipf
