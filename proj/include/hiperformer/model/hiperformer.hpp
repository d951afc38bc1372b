#pragma once

#include <filesystem>
#include <fstream>
#include <memory>

#include "hiperformer/core/serialize.hpp"
#include "hiperformer/model/global_encoder.hpp"
#include "hiperformer/model/lgff.hpp"
#include "hiperformer/model/local_encoder.hpp"
#include "hiperformer/model/ppa.hpp"

namespace hipf {

// Full assembly: three-branch hierarchical encoder (local CNN, global
// windowed attention, LGFF fusion), PPA bridge, multi-scale decoder with
// four-scale output fusion. Ablation switches prune whole subsystems.
template <typename T>
class HiPerformer {
public:
    HiPerformer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
        cfg.validate();
        if (cfg.use_local) local_ = std::make_unique<LocalEncoder<T>>(store_, "local", cfg);
        if (cfg.use_global) global_ = std::make_unique<GlobalEncoder<T>>(store_, "global", cfg);
        if (cfg.use_lgff) {
            require(cfg.use_local && cfg.use_global, "LGFF requires both encoder branches");
            for (int i = 0; i < 4; ++i) {
                auto iu = static_cast<std::size_t>(i);
                i64 prev_w = i == 0 ? 0 : cfg.widths[iu - 1];
                lgff_[iu] = std::make_unique<Lgff<T>>(store_, "lgff" + std::to_string(i),
                                                      cfg.widths[iu], prev_w, cfg.spe_reduction);
            }
        }
        if (cfg.use_pmi) pmi_ = std::make_unique<Pmi<T>>(store_, "pmi", cfg.widths);
        for (int i = 0; i < 3; ++i) {
            auto iu = static_cast<std::size_t>(i);
            i64 w = cfg.widths[iu];
            if (cfg.use_pga)
                pga_[iu] = std::make_unique<Pga<T>>(store_, "pga" + std::to_string(i), w, cfg.eag_groups);
            ConvSpec one{};
            up_align_[iu] = ConvBnRelu<T>(store_, "dec.up_align" + std::to_string(i),
                                          cfg.widths[iu + 1], w, 1, one);
            skip_reduce_[iu] = Conv2dLayer<T>(store_, "dec.skip_reduce" + std::to_string(i), 2 * w, w, 1);
            ConvSpec three{.stride = 1, .pad = 1, .dilation = 1, .groups = 1};
            dec_a_[iu] = ConvBnRelu<T>(store_, "dec.block" + std::to_string(i) + "a", w, w, 3, three);
            dec_b_[iu] = ConvBnRelu<T>(store_, "dec.block" + std::to_string(i) + "b", w, w, 3, three);
        }
        for (int i = 0; i < 4; ++i) {
            auto& head = heads_[static_cast<std::size_t>(i)];
            head = Conv2dLayer<T>(store_, "dec.head" + std::to_string(i),
                                  cfg.widths[static_cast<std::size_t>(i)], cfg.num_classes, 1);
            // Small classifier init: the four per-scale logit maps are summed,
            // so default init would start the loss far from the uniform point.
            init_trunc_normal(head.weight, store_.rng(), T(0.01));
        }
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return store_; }
    i64 param_count() const { return store_.count_scalars(); }

    std::array<Tensor<T>, 4> encode(const Tensor<T>& image, bool training) {
        std::array<Tensor<T>, 4> local_feats, global_feats, fused;
        if (local_) local_feats = local_->forward(image, training);
        if (global_) global_feats = global_->forward(image);
        if (cfg_.use_lgff) {
            Tensor<T> prev;  // undefined at stage 1
            for (int i = 0; i < 4; ++i) {
                auto iu = static_cast<std::size_t>(i);
                fused[iu] = lgff_[iu]->forward(local_feats[iu], global_feats[iu], prev);
                prev = fused[iu];
            }
        } else {
            for (int i = 0; i < 4; ++i) {
                auto iu = static_cast<std::size_t>(i);
                if (local_ && global_)
                    fused[iu] = add(local_feats[iu], global_feats[iu]);
                else
                    fused[iu] = local_ ? local_feats[iu] : global_feats[iu];
            }
        }
        return fused;
    }

    Tensor<T> forward(const Tensor<T>& image, bool training) {
        require(image.rank() == 4 && image.dim(1) == cfg_.in_channels,
                "HiPerformer: expected [N," + std::to_string(cfg_.in_channels) + ",H,W] input");
        require(image.dim(2) == cfg_.input_extent && image.dim(3) == cfg_.input_extent,
                "HiPerformer: input extent does not match config");
        std::array<Tensor<T>, 4> enc = encode(image, training);
        std::array<Tensor<T>, 4> bridge = cfg_.use_pmi ? pmi_->forward(enc, training) : enc;

        std::array<Tensor<T>, 4> dec;
        dec[3] = bridge[3];
        for (int i = 2; i >= 0; --i) {
            auto iu = static_cast<std::size_t>(i);
            Tensor<T> up = up_align_[iu].forward(resize2d(dec[iu + 1], 2, ResizeMode::Bilinear), training);
            Tensor<T> skip = cfg_.use_pga ? pga_[iu]->forward(bridge[iu], up, training) : bridge[iu];
            Tensor<T> x = skip_reduce_[iu].forward(concat<T>({skip, up}, 1));
            dec[iu] = dec_b_[iu].forward(dec_a_[iu].forward(x, training), training);
        }

        // Four-scale output fusion: per-scale 1x1 head, upsample, elementwise sum.
        Tensor<T> logits;
        for (int i = 0; i < 4; ++i) {
            auto iu = static_cast<std::size_t>(i);
            i64 scale = cfg_.input_extent / dec[iu].dim(2);
            Tensor<T> o = resize2d(heads_[iu].forward(dec[iu]), scale, ResizeMode::Bilinear);
            logits = logits.defined() ? add(logits, o) : o;
        }
        return logits;
    }

    void save_checkpoint(const std::string& dir) const {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        nlohmann::json manifest;
        manifest["format"] = "hiperformer-checkpoint-v1";
        manifest["config"] = cfg_;
        nlohmann::json names = nlohmann::json::array();
        for (const auto& [name, t] : store_.params()) {
            save_tensor(dir + "/" + name + ".htsr", t);
            names.push_back(name);
        }
        nlohmann::json bufs = nlohmann::json::array();
        for (const auto& [name, t] : store_.buffers()) {
            save_tensor(dir + "/" + name + ".htsr", t);
            bufs.push_back(name);
        }
        manifest["params"] = names;
        manifest["buffers"] = bufs;
        std::ofstream os(dir + "/manifest.json");
        require(os.good(), "save_checkpoint: cannot write manifest in " + dir);
        os << manifest.dump(2) << "\n";
    }

    void load_checkpoint(const std::string& dir) {
        auto load_into = [&](std::vector<std::pair<std::string, Tensor<T>>>& dst) {
            for (auto& [name, t] : dst) {
                Tensor<T> loaded = load_tensor<T>(dir + "/" + name + ".htsr");
                require(loaded.shape() == t.shape(), "load_checkpoint: shape mismatch for " + name);
                t.data() = loaded.data();
            }
        };
        load_into(store_.params());
        load_into(store_.buffers());
    }

    static ModelConfig read_manifest_config(const std::string& dir) {
        std::ifstream is(dir + "/manifest.json");
        require(is.good(), "checkpoint manifest not found in " + dir);
        nlohmann::json j;
        is >> j;
        return j.at("config").get<ModelConfig>();
    }

private:
    ModelConfig cfg_;
    ParamStore<T> store_;
    std::unique_ptr<LocalEncoder<T>> local_;
    std::unique_ptr<GlobalEncoder<T>> global_;
    std::array<std::unique_ptr<Lgff<T>>, 4> lgff_;
    std::unique_ptr<Pmi<T>> pmi_;
    std::array<std::unique_ptr<Pga<T>>, 3> pga_;
    std::array<ConvBnRelu<T>, 3> up_align_;
    std::array<Conv2dLayer<T>, 3> skip_reduce_;
    std::array<ConvBnRelu<T>, 3> dec_a_, dec_b_;
    std::array<Conv2dLayer<T>, 4> heads_;
};

}  // namespace hipf
