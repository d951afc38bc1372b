#pragma once

#include <iostream>
#include <sstream>

#include "hiperformer/data/synth.hpp"
#include "hiperformer/model/hiperformer.hpp"
#include "hiperformer/train/metrics.hpp"
#include "hiperformer/train/optim.hpp"

namespace hipf {

struct TrainConfig {
    double lr0 = 1e-4;
    double weight_decay = 5e-4;
    i64 t_max = 100;        // cosine annealing horizon
    double eta_min = 1e-6;
    i64 epochs = 125;
    i64 batch_size = 8;
    i64 max_steps = 0;      // 0 = bounded by epochs only
    double clip_norm = 1.0;
    double alpha = 0.5;     // CE/Dice mix
    std::uint64_t seed = 42;
    bool aug_flip = true;
    bool aug_rotate = true;
    // The cosine schedule can be advanced per epoch (default) or per step;
    // the training-length literature is ambiguous between the two units.
    bool schedule_per_step = false;

    void validate() const {
        require(lr0 > eta_min && eta_min > 0, "TrainConfig: need lr0 > eta_min > 0");
        require(clip_norm > 0, "TrainConfig: clip norm must be positive");
        require(batch_size > 0 && epochs >= 0, "TrainConfig: bad sizes");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"lr0", c.lr0},       {"weight_decay", c.weight_decay},
                       {"t_max", c.t_max},   {"eta_min", c.eta_min},
                       {"epochs", c.epochs}, {"batch_size", c.batch_size},
                       {"max_steps", c.max_steps}, {"clip_norm", c.clip_norm},
                       {"alpha", c.alpha},   {"seed", c.seed},
                       {"aug_flip", c.aug_flip}, {"aug_rotate", c.aug_rotate},
                       {"schedule_per_step", c.schedule_per_step}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.lr0 = j.value("lr0", d.lr0);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.t_max = j.value("t_max", d.t_max);
    c.eta_min = j.value("eta_min", d.eta_min);
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.max_steps = j.value("max_steps", d.max_steps);
    c.clip_norm = j.value("clip_norm", d.clip_norm);
    c.alpha = j.value("alpha", d.alpha);
    c.seed = j.value("seed", d.seed);
    c.aug_flip = j.value("aug_flip", d.aug_flip);
    c.aug_rotate = j.value("aug_rotate", d.aug_rotate);
    c.schedule_per_step = j.value("schedule_per_step", d.schedule_per_step);
}

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = nlohmann::json{{"extent", s.extent},         {"num_classes", s.num_classes},
                       {"noise_std", s.noise_std},   {"contrast_lo", s.contrast_lo},
                       {"contrast_hi", s.contrast_hi}, {"train_count", s.train_count},
                       {"test_count", s.test_count}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SynthSpec& s) {
    SynthSpec d;
    s.extent = j.value("extent", d.extent);
    s.num_classes = j.value("num_classes", d.num_classes);
    s.noise_std = j.value("noise_std", d.noise_std);
    s.contrast_lo = j.value("contrast_lo", d.contrast_lo);
    s.contrast_hi = j.value("contrast_hi", d.contrast_hi);
    s.train_count = j.value("train_count", d.train_count);
    s.test_count = j.value("test_count", d.test_count);
    s.seed = j.value("seed", d.seed);
}

struct TrainResult {
    std::vector<double> epoch_losses;  // mean loss per epoch
    i64 steps = 0;
};

// Minibatch training: augment -> forward -> combined loss -> backward ->
// clip -> AdamW, cosine-annealed learning rate. `log` (optional) receives
// one JSON record per step.
template <typename T>
TrainResult train_model(HiPerformer<T>& model, const TrainConfig& tc, const SynthDataset& data,
                        std::ostream* log = nullptr) {
    tc.validate();
    require(!data.train.empty(), "train_model: empty training set");
    typename AdamW<T>::Hyper hyper;
    hyper.weight_decay = tc.weight_decay;
    AdamW<T> opt(model.params().params(), hyper);
    Rng aug_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
    Rng shuffle_rng(tc.seed);
    LossConfig loss_cfg{.alpha = tc.alpha, .smooth = 1e-5};

    TrainResult result;
    i64 n = static_cast<i64>(data.train.size());
    std::vector<i64> indices(static_cast<std::size_t>(n));
    for (i64 i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;

    for (i64 epoch = 0; epoch < tc.epochs; ++epoch) {
        double lr = tc.schedule_per_step ? 0.0 : cosine_lr(epoch, tc.t_max, tc.lr0, tc.eta_min);
        std::shuffle(indices.begin(), indices.end(), shuffle_rng);
        double epoch_loss = 0.0;
        i64 epoch_batches = 0;
        for (i64 start = 0; start + tc.batch_size <= n; start += tc.batch_size) {
            if (tc.max_steps > 0 && result.steps >= tc.max_steps) break;
            std::vector<SynthSample> augmented;
            std::vector<const SynthSample*> batch;
            for (i64 b = 0; b < tc.batch_size; ++b) {
                const auto& s = data.train[static_cast<std::size_t>(indices[static_cast<std::size_t>(start + b)])];
                augmented.push_back(augment(s, aug_rng, tc.aug_flip, tc.aug_rotate));
            }
            for (const auto& s : augmented) batch.push_back(&s);
            auto [images, labels] = make_batch<T>(batch);

            model.params().zero_grads();
            Tensor<T> logits = model.forward(images, /*training=*/true);
            Tensor<T> loss = combined_loss(logits, labels, loss_cfg);
            double loss_val = static_cast<double>(loss.item());
            if (!std::isfinite(loss_val))
                fail("train_model: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                     std::to_string(result.steps) + " (lr=" + std::to_string(lr) + ")");
            backward(loss);
            clip_grad_norm(model.params().params(), tc.clip_norm);
            if (tc.schedule_per_step) lr = cosine_lr(result.steps, tc.t_max, tc.lr0, tc.eta_min);
            opt.step(lr);
            ++result.steps;
            ++epoch_batches;
            epoch_loss += loss_val;
            if (log) {
                nlohmann::json rec{{"epoch", epoch}, {"step", result.steps}, {"lr", lr}, {"loss", loss_val}};
                (*log) << rec.dump() << "\n";
            }
        }
        if (epoch_batches > 0) result.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_batches));
        if (tc.max_steps > 0 && result.steps >= tc.max_steps) break;
    }
    return result;
}

// ---- evaluation ----

struct ClassMetrics {
    double dsc = 0, hd95 = 0, recall = 0, iou = 0;
};

struct MetricReport {
    std::vector<ClassMetrics> per_class;  // foreground classes 1..C-1, mean over cases
    ClassMetrics aggregate;               // per-case class mean, then mean over cases
    i64 cases = 0;
};

template <typename T>
MetricReport evaluate(HiPerformer<T>& model, const std::vector<SynthSample>& test,
                      bool boundary_hd = true) {
    require(!test.empty(), "evaluate: empty test set");
    NoGradGuard ng;
    int C = static_cast<int>(model.config().num_classes);
    int fg = C - 1;
    MetricReport report;
    report.per_class.assign(static_cast<std::size_t>(fg), {});
    report.cases = static_cast<i64>(test.size());

    for (const auto& sample : test) {
        auto [image, labels] = make_batch<T>({&sample});
        Tensor<T> logits = model.forward(image, /*training=*/false);
        LabelMap pred = argmax_labels(logits)[0];
        auto counts = confusion_counts(pred, sample.label, C);
        ClassMetrics case_mean;
        for (int c = 1; c < C; ++c) {
            const auto& cc = counts[static_cast<std::size_t>(c)];
            ClassMetrics m;
            m.dsc = dsc_from_counts(cc);
            m.hd95 = hd95(pred, sample.label, c, boundary_hd);
            m.recall = recall_from_counts(cc);
            m.iou = iou_from_counts(cc);
            auto& agg = report.per_class[static_cast<std::size_t>(c - 1)];
            agg.dsc += m.dsc;
            agg.hd95 += m.hd95;
            agg.recall += m.recall;
            agg.iou += m.iou;
            case_mean.dsc += m.dsc;
            case_mean.hd95 += m.hd95;
            case_mean.recall += m.recall;
            case_mean.iou += m.iou;
        }
        report.aggregate.dsc += case_mean.dsc / fg;
        report.aggregate.hd95 += case_mean.hd95 / fg;
        report.aggregate.recall += case_mean.recall / fg;
        report.aggregate.iou += case_mean.iou / fg;
    }
    auto scale = [&](ClassMetrics& m) {
        m.dsc /= static_cast<double>(report.cases);
        m.hd95 /= static_cast<double>(report.cases);
        m.recall /= static_cast<double>(report.cases);
        m.iou /= static_cast<double>(report.cases);
    };
    for (auto& m : report.per_class) scale(m);
    scale(report.aggregate);
    return report;
}

inline nlohmann::json report_to_json(const MetricReport& r, bool with_recall_iou = false) {
    nlohmann::json j;
    j["cases"] = r.cases;
    j["mean_dsc_percent"] = 100.0 * r.aggregate.dsc;
    j["mean_hd95"] = r.aggregate.hd95;
    if (with_recall_iou) {
        j["mean_recall_percent"] = 100.0 * r.aggregate.recall;
        j["mean_iou_percent"] = 100.0 * r.aggregate.iou;
    }
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
        nlohmann::json c{{"class_id", i + 1},
                         {"dsc_percent", 100.0 * r.per_class[i].dsc},
                         {"hd95", r.per_class[i].hd95}};
        if (with_recall_iou) {
            c["recall_percent"] = 100.0 * r.per_class[i].recall;
            c["iou_percent"] = 100.0 * r.per_class[i].iou;
        }
        classes.push_back(c);
    }
    j["per_class"] = classes;
    return j;
}

inline std::string report_to_table(const MetricReport& r, bool with_recall_iou = false) {
    std::ostringstream os;
    os << "class      DSC(%)     HD95";
    if (with_recall_iou) os << "     Recall(%)   IoU(%)";
    os << "\n";
    char line[160];
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
        const auto& m = r.per_class[i];
        if (with_recall_iou)
            std::snprintf(line, sizeof(line), "%-8zu %8.2f %8.3f   %8.2f %8.2f\n", i + 1,
                          100.0 * m.dsc, m.hd95, 100.0 * m.recall, 100.0 * m.iou);
        else
            std::snprintf(line, sizeof(line), "%-8zu %8.2f %8.3f\n", i + 1, 100.0 * m.dsc, m.hd95);
        os << line;
    }
    if (with_recall_iou)
        std::snprintf(line, sizeof(line), "%-8s %8.2f %8.3f   %8.2f %8.2f\n", "mean",
                      100.0 * r.aggregate.dsc, r.aggregate.hd95, 100.0 * r.aggregate.recall,
                      100.0 * r.aggregate.iou);
    else
        std::snprintf(line, sizeof(line), "%-8s %8.2f %8.3f\n", "mean", 100.0 * r.aggregate.dsc,
                      r.aggregate.hd95);
    os << line;
    return os.str();
}

// ---- protocols ----

struct AblationRow {
    bool local, global, lgff, pmi, pga;
    double mean_dsc = 0;
};

inline std::vector<std::array<bool, 5>> ablation_grid() {
    return {{true, false, false, true, true},  {false, true, false, true, true},
            {true, true, true, false, false},  {true, true, true, false, true},
            {true, true, true, true, false},   {true, true, true, true, true}};
}

template <typename T>
std::vector<AblationRow> ablate(const ModelConfig& base, const TrainConfig& tc, const SynthSpec& spec,
                                std::ostream* progress = nullptr) {
    SynthDataset data = generate_dataset(spec);
    std::vector<AblationRow> rows;
    for (const auto& sw : ablation_grid()) {
        ModelConfig cfg = base;
        cfg.use_local = sw[0];
        cfg.use_global = sw[1];
        cfg.use_lgff = sw[2];
        cfg.use_pmi = sw[3];
        cfg.use_pga = sw[4];
        HiPerformer<T> model(cfg, tc.seed);
        train_model(model, tc, data);
        MetricReport r = evaluate(model, data.test);
        rows.push_back({sw[0], sw[1], sw[2], sw[3], sw[4], r.aggregate.dsc});
        if (progress) {
            (*progress) << (sw[0] ? "L" : "-") << (sw[1] ? "G" : "-") << (sw[2] ? "F" : "-")
                        << (sw[3] ? "M" : "-") << (sw[4] ? "A" : "-") << "  mean DSC "
                        << 100.0 * r.aggregate.dsc << "%\n";
        }
    }
    return rows;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "Local  Global  LGFF  PMI  PGA   DSC(%, mean)\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-6s %-7s %-5s %-4s %-5s %8.2f\n", r.local ? "yes" : "no",
                      r.global ? "yes" : "no", r.lgff ? "yes" : "no", r.pmi ? "yes" : "no",
                      r.pga ? "yes" : "no", 100.0 * r.mean_dsc);
        os << line;
    }
    return os.str();
}

struct AlphaRow {
    double alpha, mean_dsc, mean_hd95;
};

template <typename T>
std::vector<AlphaRow> alpha_sweep(const ModelConfig& cfg, const TrainConfig& base_tc,
                                  const SynthSpec& spec, std::ostream* progress = nullptr) {
    SynthDataset data = generate_dataset(spec);
    std::vector<AlphaRow> rows;
    for (double alpha : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        TrainConfig tc = base_tc;
        tc.alpha = alpha;
        HiPerformer<T> model(cfg, tc.seed);
        train_model(model, tc, data);
        MetricReport r = evaluate(model, data.test);
        rows.push_back({alpha, r.aggregate.dsc, r.aggregate.hd95});
        if (progress)
            (*progress) << "alpha " << alpha << "  mean DSC " << 100.0 * r.aggregate.dsc
                        << "%  mean HD95 " << r.aggregate.hd95 << "\n";
    }
    return rows;
}

}  // namespace hipf
