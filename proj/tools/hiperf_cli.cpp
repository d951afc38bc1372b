// Command-line front end: train / eval / infer / gradcheck / ablate /
// alpha-sweep over the synthetic shape dataset.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hiperformer/core/gradcheck.hpp"
#include "hiperformer/io/png.hpp"
#include "hiperformer/train/harness.hpp"

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
    std::ifstream is(path);
    hipf::require(is.good(), "cannot open " + path);
    json j;
    is >> j;
    return j;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream os(path);
    hipf::require(os.good(), "cannot write " + path);
    os << j.dump(2) << "\n";
}

hipf::ModelConfig load_model_config(const std::string& path) {
    if (path.empty()) return hipf::ModelConfig::desk();
    return read_json(path).get<hipf::ModelConfig>();
}

hipf::TrainConfig load_train_config(const std::string& path) {
    if (path.empty()) return hipf::TrainConfig{};
    return read_json(path).get<hipf::TrainConfig>();
}

hipf::SynthSpec load_synth_spec(const std::string& path, hipf::i64 extent, hipf::i64 classes) {
    hipf::SynthSpec spec;
    if (!path.empty()) spec = read_json(path).get<hipf::SynthSpec>();
    spec.extent = extent;
    spec.num_classes = classes;
    return spec;
}

// Label raster as grayscale PNG; ids are stretched to the full byte range so
// results are visible in ordinary viewers (id = round(255 * c / (C-1))).
hipf::ImageU8 label_to_png(const hipf::LabelMap& m, int num_classes, bool color) {
    hipf::ImageU8 img;
    img.height = m.height;
    img.width = m.width;
    img.channels = color ? 3 : 1;
    img.pixels.assign(static_cast<std::size_t>(m.height * m.width * img.channels), 0);
    for (hipf::i64 y = 0; y < m.height; ++y)
        for (hipf::i64 x = 0; x < m.width; ++x) {
            int c = m.at(y, x);
            if (color) {
                if (c > 0) {
                    auto tint = hipf::detail::class_tint(c);
                    for (hipf::i64 ch = 0; ch < 3; ++ch)
                        img.at(y, x, ch) = static_cast<unsigned char>(
                            std::lround(255.0 * tint[static_cast<std::size_t>(ch)]));
                }
            } else {
                img.at(y, x) = static_cast<unsigned char>(
                    std::lround(255.0 * c / std::max(1, num_classes - 1)));
            }
        }
    return img;
}

int run_train(const std::string& model_cfg_path, const std::string& train_cfg_path,
              const std::string& data_cfg_path, const std::string& out_dir,
              const std::string& log_path) {
    hipf::ModelConfig mc = load_model_config(model_cfg_path);
    hipf::TrainConfig tc = load_train_config(train_cfg_path);
    hipf::SynthSpec spec = load_synth_spec(data_cfg_path, mc.input_extent, mc.num_classes);
    hipf::SynthDataset data = hipf::generate_dataset(spec);

    hipf::HiPerformer<float> model(mc, tc.seed);
    std::cout << "parameters: " << model.param_count() << "\n";
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        hipf::require(log.good(), "cannot write " + log_path);
    }
    auto result = hipf::train_model(model, tc, data, log.is_open() ? &log : nullptr);
    std::cout << "steps: " << result.steps << "\n";
    if (!result.epoch_losses.empty())
        std::cout << "final epoch loss: " << result.epoch_losses.back() << "\n";
    model.save_checkpoint(out_dir);
    hipf::MetricReport report = hipf::evaluate(model, data.test);
    std::cout << hipf::report_to_table(report);
    return 0;
}

int run_eval(const std::string& ckpt_dir, const std::string& data_cfg_path,
             const std::string& report_path, bool recall_iou) {
    hipf::ModelConfig mc = hipf::HiPerformer<float>::read_manifest_config(ckpt_dir);
    hipf::HiPerformer<float> model(mc, 0);
    model.load_checkpoint(ckpt_dir);
    hipf::SynthSpec spec = load_synth_spec(data_cfg_path, mc.input_extent, mc.num_classes);
    hipf::SynthDataset data = hipf::generate_dataset(spec);
    hipf::MetricReport report = hipf::evaluate(model, data.test);
    std::cout << hipf::report_to_table(report, recall_iou);
    if (!report_path.empty()) write_json(report_path, hipf::report_to_json(report, recall_iou));
    return 0;
}

int run_infer(const std::string& ckpt_dir, const std::string& image_path,
              const std::string& out_path, bool color) {
    hipf::ModelConfig mc = hipf::HiPerformer<float>::read_manifest_config(ckpt_dir);
    hipf::HiPerformer<float> model(mc, 0);
    model.load_checkpoint(ckpt_dir);

    hipf::ImageU8 img = hipf::read_png(image_path);
    hipf::require(img.height == mc.input_extent && img.width == mc.input_extent,
                  "infer: image extent must be " + std::to_string(mc.input_extent));
    hipf::i64 E = mc.input_extent;
    hipf::Tensor<float> input = hipf::Tensor<float>::zeros({1, 3, E, E});
    for (hipf::i64 y = 0; y < E; ++y)
        for (hipf::i64 x = 0; x < E; ++x)
            for (hipf::i64 c = 0; c < 3; ++c)
                input.data()[static_cast<std::size_t>((c * E + y) * E + x)] =
                    static_cast<float>(img.at(y, x, img.channels == 3 ? c : 0)) / 255.0f;
    hipf::NoGradGuard ng;
    hipf::Tensor<float> logits = model.forward(input, /*training=*/false);
    hipf::LabelMap pred = hipf::argmax_labels(logits)[0];
    hipf::write_png(out_path, label_to_png(pred, static_cast<int>(mc.num_classes), color));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// Double-precision finite-difference check of the full forward + loss path on
// a tiny model, against the analytic gradients. A few evenly spaced elements
// are perturbed per parameter; exhaustive checks live in the test suite.
int run_gradcheck() {
    hipf::ModelConfig mc = hipf::ModelConfig::desk();
    mc.input_extent = 32;
    hipf::HiPerformer<double> model(mc, 11);
    hipf::SynthSpec spec;
    spec.extent = 32;
    spec.train_count = 1;
    spec.test_count = 0;
    hipf::SynthDataset data = hipf::generate_dataset(spec);
    auto [image, labels] = hipf::make_batch<double>({&data.train[0]});

    double worst = 0.0;
    std::string worst_name;
    for (auto& [name, p] : model.params().params()) {
        auto f = [&](const hipf::Tensor<double>&) {
            hipf::Tensor<double> logits = model.forward(image, /*training=*/false);
            return hipf::combined_loss(logits, labels, {});
        };
        double err = hipf::finite_diff_gradcheck<double>(f, p, 1e-5, /*max_elems=*/4,
                                                         /*kink_tol=*/1e-3);
        std::cout << name << "  rel.err " << err << "\n";
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    }
    std::cout << "worst: " << worst_name << "  rel.err " << worst << "\n";
    bool ok = worst < 1e-4;
    std::cout << (ok ? "PASS" : "FAIL") << " (threshold 1e-4)\n";
    return ok ? 0 : 1;
}

int run_ablate(const std::string& model_cfg_path, const std::string& train_cfg_path,
               const std::string& data_cfg_path, const std::string& out_path) {
    hipf::ModelConfig mc = load_model_config(model_cfg_path);
    hipf::TrainConfig tc = load_train_config(train_cfg_path);
    hipf::SynthSpec spec = load_synth_spec(data_cfg_path, mc.input_extent, mc.num_classes);
    auto rows = hipf::ablate<float>(mc, tc, spec, &std::cout);
    std::cout << hipf::ablation_table(rows);
    if (!out_path.empty()) {
        json j = json::array();
        for (const auto& r : rows)
            j.push_back({{"local", r.local}, {"global", r.global}, {"lgff", r.lgff},
                         {"pmi", r.pmi}, {"pga", r.pga}, {"mean_dsc_percent", 100.0 * r.mean_dsc}});
        write_json(out_path, j);
    }
    return 0;
}

int run_alpha_sweep(const std::string& model_cfg_path, const std::string& train_cfg_path,
                    const std::string& data_cfg_path, const std::string& out_path) {
    hipf::ModelConfig mc = load_model_config(model_cfg_path);
    hipf::TrainConfig tc = load_train_config(train_cfg_path);
    hipf::SynthSpec spec = load_synth_spec(data_cfg_path, mc.input_extent, mc.num_classes);
    auto rows = hipf::alpha_sweep<float>(mc, tc, spec, &std::cout);
    if (!out_path.empty()) {
        json j = json::array();
        for (const auto& r : rows)
            j.push_back({{"alpha", r.alpha}, {"mean_dsc_percent", 100.0 * r.mean_dsc},
                         {"mean_hd95", r.mean_hd95}});
        write_json(out_path, j);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical dual-branch segmentation: training and inference tool"};
    app.require_subcommand(1);

    std::string model_cfg, train_cfg, data_cfg, out_dir = "checkpoint", log_path;
    std::string ckpt = "checkpoint", report_path, image_path, out_png = "pred.png";
    bool recall_iou = false, color = false;

    auto* train = app.add_subcommand("train", "train a model on the synthetic dataset");
    train->add_option("--model-config", model_cfg, "model config JSON (default: desk preset)");
    train->add_option("--train-config", train_cfg, "training config JSON");
    train->add_option("--data-config", data_cfg, "dataset spec JSON");
    train->add_option("--out", out_dir, "checkpoint output directory");
    train->add_option("--log", log_path, "step-by-step JSONL loss log");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", ckpt, "checkpoint directory");
    eval_cmd->add_option("--data-config", data_cfg, "dataset spec JSON");
    eval_cmd->add_option("--report", report_path, "metrics report JSON output");
    eval_cmd->add_flag("--recall-iou", recall_iou, "also report recall and IoU");

    auto* infer = app.add_subcommand("infer", "segment a PNG image");
    infer->add_option("--checkpoint", ckpt, "checkpoint directory");
    infer->add_option("--image", image_path, "input PNG (gray or RGB)")->required();
    infer->add_option("--out", out_png, "output label PNG");
    infer->add_flag("--color", color, "write RGB class tints instead of gray ids");

    auto* gradcheck = app.add_subcommand(
        "gradcheck", "finite-difference gradient check of the full model (double precision)");

    auto* ablate_cmd = app.add_subcommand("ablate", "train and score all subsystem ablations");
    ablate_cmd->add_option("--model-config", model_cfg, "model config JSON (default: desk preset)");
    ablate_cmd->add_option("--train-config", train_cfg, "training config JSON");
    ablate_cmd->add_option("--data-config", data_cfg, "dataset spec JSON");
    ablate_cmd->add_option("--out", report_path, "results JSON output");

    auto* sweep = app.add_subcommand("alpha-sweep", "sweep the CE/Dice loss mix");
    sweep->add_option("--model-config", model_cfg, "model config JSON (default: desk preset)");
    sweep->add_option("--train-config", train_cfg, "training config JSON");
    sweep->add_option("--data-config", data_cfg, "dataset spec JSON");
    sweep->add_option("--out", report_path, "results JSON output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return run_train(model_cfg, train_cfg, data_cfg, out_dir, log_path);
        if (*eval_cmd) return run_eval(ckpt, data_cfg, report_path, recall_iou);
        if (*infer) return run_infer(ckpt, image_path, out_png, color);
        if (*gradcheck) return run_gradcheck();
        if (*ablate_cmd) return run_ablate(model_cfg, train_cfg, data_cfg, report_path);
        if (*sweep) return run_alpha_sweep(model_cfg, train_cfg, data_cfg, report_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
