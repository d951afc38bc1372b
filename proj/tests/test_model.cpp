// Full model assembly: local branch block gradients, output shape contract,
// parameter-count stability, determinism, checkpointing, and trainability of
// every ablation variant.
#include "hiperformer/model/hiperformer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hiperformer/data/synth.hpp"
#include "hiperformer/train/harness.hpp"
#include "helpers.hpp"

using hipf::i64;
using hipf::ModelConfig;
using hipf::Shape;
using hipf::Tensor;
using testutil::grad_err;
using testutil::kGradTol;
using testutil::rand_tensor;

namespace {

hipf::Rng rng(314);

std::vector<unsigned char> file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("dual-branch residual block gradients") {
    hipf::ParamStore<double> ps(1);
    hipf::DuChResBlock<double> blk(ps, "blk", 4, 2);
    // dedicated stream: keeps ReLU pre-activations off the kink, where finite
    // differences are unreliable
    hipf::Rng lrng(808);
    auto x = rand_tensor({1, 4, 6, 6}, lrng, -0.5, 0.5);
    CHECK(blk.forward(x, true).shape() == x.shape());
    auto loss = [&] { return hipf::mean_all(hipf::mul(blk.forward(x, true), x)); };
    CHECK(testutil::params_grad_err(loss, ps) < kGradTol);
    CHECK(grad_err([&](auto& t) { return blk.forward(t, true); }, x) < kGradTol);
}

TEST_CASE("local encoder stage extents and widths") {
    ModelConfig cfg = ModelConfig::desk();
    hipf::ParamStore<double> ps(2);
    hipf::LocalEncoder<double> enc(ps, "l", cfg);
    auto img = rand_tensor({2, 3, 64, 64}, rng, 0.0, 1.0);
    auto outs = enc.forward(img, /*training=*/true);
    for (int s = 0; s < 4; ++s) {
        i64 e = cfg.stage_extent(s);
        CHECK(outs[static_cast<std::size_t>(s)].shape() ==
              Shape{2, cfg.widths[static_cast<std::size_t>(s)], e, e});
    }
}

TEST_CASE("model forward shape contract over input extents") {
    for (i64 extent : {32, 64, 96}) {
        ModelConfig cfg = ModelConfig::desk();
        cfg.input_extent = extent;
        hipf::HiPerformer<float> model(cfg, 3);
        auto img = Tensor<float>::filled({1, 3, extent, extent}, 0.5f);
        hipf::NoGradGuard ng;
        auto logits = model.forward(img, /*training=*/false);
        CHECK(logits.shape() == Shape{1, cfg.num_classes, extent, extent});
    }
}

TEST_CASE("config validation rejects bad setups") {
    ModelConfig cfg = ModelConfig::desk();
    cfg.input_extent = 48;  // not divisible by 32
    CHECK_THROWS(cfg.validate());
    cfg = ModelConfig::desk();
    cfg.use_local = cfg.use_global = false;
    CHECK_THROWS(cfg.validate());
    cfg = ModelConfig::desk();
    cfg.heads = {3, 3, 3, 3};  // 3 does not divide 8
    CHECK_THROWS(cfg.validate());
    CHECK_NOTHROW(ModelConfig::desk().validate());
    CHECK_NOTHROW(ModelConfig::paper_scale().validate());
}

TEST_CASE("fusion stage requires both branches") {
    ModelConfig cfg = ModelConfig::desk();
    cfg.use_global = false;  // LGFF still on
    CHECK_THROWS(hipf::HiPerformer<float>(cfg, 1));
}

TEST_CASE("parameter count is stable for the desk preset") {
    hipf::HiPerformer<float> model(ModelConfig::desk(), 0);
    // frozen reference; any architectural change must be deliberate
    CHECK(model.param_count() == 853074);
    // count equals the sum over registered parameter tensors
    i64 total = 0;
    for (const auto& [name, p] : model.params().params()) total += p.size();
    CHECK(total == model.param_count());
}

TEST_CASE("identical seeds give identical models and outputs") {
    ModelConfig cfg = ModelConfig::desk();
    cfg.input_extent = 32;
    hipf::HiPerformer<float> a(cfg, 12345), b(cfg, 12345);
    auto pa = a.params().params();
    auto pb = b.params().params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second.data() == pb[i].second.data());
    }
    auto img = rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
    Tensor<float> imgf = Tensor<float>::zeros({1, 3, 32, 32});
    for (std::size_t i = 0; i < imgf.data().size(); ++i)
        imgf.data()[i] = static_cast<float>(img.data()[i]);
    hipf::NoGradGuard ng;
    CHECK(a.forward(imgf, false).data() == b.forward(imgf, false).data());
}

TEST_CASE("checkpoint round trip and byte-identical saves") {
    namespace fs = std::filesystem;
    ModelConfig cfg = ModelConfig::desk();
    cfg.input_extent = 32;
    fs::path dir1 = fs::temp_directory_path() / "hipf_ckpt_a";
    fs::path dir2 = fs::temp_directory_path() / "hipf_ckpt_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    hipf::HiPerformer<float> m1(cfg, 99);
    m1.save_checkpoint(dir1.string());
    hipf::HiPerformer<float> m2(cfg, 99);
    m2.save_checkpoint(dir2.string());
    // same seed/config -> every checkpoint file byte-identical
    for (const auto& entry : fs::directory_iterator(dir1)) {
        auto other = dir2 / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(file_bytes(entry.path().string()) == file_bytes(other.string()));
    }

    // load into a differently seeded model; outputs must match the source
    hipf::HiPerformer<float> m3(cfg, 7);
    m3.load_checkpoint(dir1.string());
    auto img = Tensor<float>::filled({1, 3, 32, 32}, 0.25f);
    hipf::NoGradGuard ng;
    CHECK(m1.forward(img, false).data() == m3.forward(img, false).data());

    // manifest carries the config
    ModelConfig rc = hipf::HiPerformer<float>::read_manifest_config(dir1.string());
    CHECK(rc.input_extent == 32);
    CHECK(rc.widths == cfg.widths);
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("every ablation variant trains: loss decreases") {
    hipf::SynthSpec spec;
    spec.extent = 32;
    spec.train_count = 8;
    spec.test_count = 1;
    hipf::SynthDataset data = hipf::generate_dataset(spec);

    for (const auto& sw : hipf::ablation_grid()) {
        ModelConfig cfg = ModelConfig::desk();
        cfg.input_extent = 32;
        cfg.use_local = sw[0];
        cfg.use_global = sw[1];
        cfg.use_lgff = sw[2];
        cfg.use_pmi = sw[3];
        cfg.use_pga = sw[4];
        hipf::HiPerformer<float> model(cfg, 5);
        hipf::TrainConfig tc;
        tc.epochs = 20;
        tc.batch_size = 8;
        tc.max_steps = 20;
        tc.lr0 = 3e-4;
        tc.seed = 5;
        auto result = hipf::train_model(model, tc, data);
        REQUIRE(result.steps == 20);
        double first = result.epoch_losses.front();
        double last = result.epoch_losses.back();
        INFO("switches LGFMA=" << sw[0] << sw[1] << sw[2] << sw[3] << sw[4]);
        CHECK(last < first);
    }
}
