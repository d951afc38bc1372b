// Pyramid bridge and gated skip attention: multiplicative pyramid cascade,
// the residual attention gate, and the multi-kernel split attention.
#include "hiperformer/model/ppa.hpp"

#include "helpers.hpp"

using hipf::i64;
using hipf::Shape;
using hipf::Tensor;
using testutil::grad_err;
using testutil::kGradTol;
using testutil::rand_tensor;

namespace {
hipf::Rng rng(555);
}

TEST_CASE("pyramid cascade: deepest level is the identity") {
    hipf::ParamStore<double> ps(1);
    std::array<i64, 4> widths{4, 4, 4, 4};
    hipf::Pmi<double> pmi(ps, "pmi", widths);
    std::array<Tensor<double>, 4> x;
    for (int i = 0; i < 4; ++i)
        x[static_cast<std::size_t>(i)] = rand_tensor({1, 4, i64(16) >> i, i64(16) >> i}, rng);
    auto y = pmi.forward(x, /*training=*/false);
    CHECK(y[3].data() == x[3].data());  // exact, no copy-through transform
    for (int i = 0; i < 3; ++i) {
        CHECK(y[static_cast<std::size_t>(i)].shape() == x[static_cast<std::size_t>(i)].shape());
    }
}

TEST_CASE("pyramid cascade: zeroed encoder path annihilates shallow levels") {
    hipf::ParamStore<double> ps(2);
    std::array<i64, 4> widths{4, 4, 4, 4};
    hipf::Pmi<double> pmi(ps, "pmi", widths);
    // zero the final 1x1 of every encoder-side adjustment: f_enc(x) == 0,
    // so the product y_i = f_enc(x_i) * f_up(...) vanishes at levels 1..3
    for (auto& [name, p] : ps.params())
        if (name.find(".enc") != std::string::npos && name.find("conv1") != std::string::npos)
            std::fill(p.data().begin(), p.data().end(), 0.0);
    std::array<Tensor<double>, 4> x;
    for (int i = 0; i < 4; ++i)
        x[static_cast<std::size_t>(i)] = rand_tensor({1, 4, i64(16) >> i, i64(16) >> i}, rng);
    auto y = pmi.forward(x, /*training=*/false);
    for (int i = 0; i < 3; ++i)
        for (double v : y[static_cast<std::size_t>(i)].data()) CHECK(v == 0.0);
}

TEST_CASE("pyramid cascade gradients") {
    hipf::ParamStore<double> ps(3);
    std::array<i64, 4> widths{4, 4, 4, 4};
    hipf::Pmi<double> pmi(ps, "pmi", widths);
    std::array<Tensor<double>, 4> x;
    for (int i = 0; i < 4; ++i)
        x[static_cast<std::size_t>(i)] = rand_tensor({1, 4, i64(8) >> i, i64(8) >> i}, rng, -0.5, 0.5);
    auto loss = [&] {
        auto y = pmi.forward(x, /*training=*/true);
        return hipf::add(hipf::mean_all(hipf::mul(y[0], y[0])), hipf::mean_all(y[1]));
    };
    CHECK(testutil::params_grad_err(loss, ps) < kGradTol);
    auto f = [&](Tensor<double>& t) {
        std::array<Tensor<double>, 4> xs = x;
        xs[0] = t;
        auto y = pmi.forward(xs, true);
        return hipf::mean_all(hipf::mul(y[0], y[0]));
    };
    CHECK(hipf::finite_diff_gradcheck<double>(f, x[0], 1e-4) < kGradTol);
}

TEST_CASE("attention gate with zero gate weights returns exactly 1.5 d") {
    hipf::ParamStore<double> ps(4);
    hipf::Eag<double> eag(ps, "eag", 4, 4);
    for (auto& [name, p] : ps.params())
        if (name.find("gate") != std::string::npos) std::fill(p.data().begin(), p.data().end(), 0.0);
    auto e = rand_tensor({2, 4, 5, 5}, rng);
    auto d = rand_tensor({2, 4, 5, 5}, rng);
    auto y = eag.forward(e, d, /*training=*/true);
    for (std::size_t i = 0; i < d.data().size(); ++i) CHECK(y.data()[i] == 1.5 * d.data()[i]);
}

TEST_CASE("attention gate output lies strictly between d and 2d for positive d") {
    hipf::ParamStore<double> ps(5);
    hipf::Eag<double> eag(ps, "eag", 4, 2);
    auto e = rand_tensor({1, 4, 6, 6}, rng);
    auto d = rand_tensor({1, 4, 6, 6}, rng, 0.1, 1.0);
    auto y = eag.forward(e, d, /*training=*/true);
    for (std::size_t i = 0; i < d.data().size(); ++i) {
        CHECK(y.data()[i] > d.data()[i]);
        CHECK(y.data()[i] < 2.0 * d.data()[i]);
    }
}

TEST_CASE("attention gate gradients") {
    hipf::ParamStore<double> ps(6);
    hipf::Eag<double> eag(ps, "eag", 4, 4);
    // dedicated stream: keeps the ReLU pre-activations away from the kink,
    // where finite differences are unreliable
    hipf::Rng lrng(555);
    auto e = rand_tensor({1, 4, 4, 4}, lrng, -0.5, 0.5);
    auto d = rand_tensor({1, 4, 4, 4}, lrng, -0.5, 0.5);
    auto loss = [&] { return hipf::mean_all(hipf::mul(eag.forward(e, d, true), e)); };
    CHECK(testutil::params_grad_err(loss, ps) < kGradTol);
    CHECK(grad_err([&](auto& t) { return eag.forward(t, d, true); }, e) < kGradTol);
    CHECK(grad_err([&](auto& t) { return eag.forward(e, t, true); }, d) < kGradTol);
}

TEST_CASE("split attention weights sum to 1 across scales") {
    hipf::ParamStore<double> ps(7);
    hipf::Psa<double> psa(ps, "psa", 8);
    auto x = rand_tensor({2, 8, 6, 6}, rng);
    std::array<Tensor<double>, 4> feats;
    for (int j = 0; j < 4; ++j)
        feats[static_cast<std::size_t>(j)] =
            psa.scale_convs[static_cast<std::size_t>(j)].forward(hipf::slice(x, 1, j * 2, 2));
    auto w = psa.scale_weights(feats);
    REQUIRE(w.shape() == Shape{2, 4, 2});
    for (i64 n = 0; n < 2; ++n)
        for (i64 c = 0; c < 2; ++c) {
            double sum = 0;
            for (i64 s = 0; s < 4; ++s) sum += w.data()[static_cast<std::size_t>((n * 4 + s) * 2 + c)];
            CHECK(sum == Catch::Approx(1.0).epsilon(1e-10));
        }
}

TEST_CASE("split attention: zeroed shared excitation head gives uniform 1/4") {
    hipf::ParamStore<double> ps(8);
    hipf::Psa<double> psa(ps, "psa", 8);
    for (auto& [name, p] : ps.params())
        if (name.find("se_") != std::string::npos) std::fill(p.data().begin(), p.data().end(), 0.0);
    auto x = rand_tensor({1, 8, 4, 4}, rng);
    std::array<Tensor<double>, 4> feats;
    for (int j = 0; j < 4; ++j)
        feats[static_cast<std::size_t>(j)] =
            psa.scale_convs[static_cast<std::size_t>(j)].forward(hipf::slice(x, 1, j * 2, 2));
    auto w = psa.scale_weights(feats);
    for (double v : w.data()) CHECK(v == Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("split attention preserves shape and passes gradients") {
    hipf::ParamStore<double> ps(9);
    hipf::Psa<double> psa(ps, "psa", 4);
    auto x = rand_tensor({1, 4, 5, 5}, rng, -0.5, 0.5);
    CHECK(psa.forward(x).shape() == x.shape());
    auto loss = [&] { return hipf::mean_all(hipf::mul(psa.forward(x), x)); };
    CHECK(testutil::params_grad_err(loss, ps) < kGradTol);
    CHECK(grad_err([&](auto& t) { return psa.forward(t); }, x) < kGradTol);
}

TEST_CASE("gated skip attention composes gate then split attention") {
    hipf::ParamStore<double> ps(10);
    hipf::Pga<double> pga(ps, "pga", 4, 4);
    auto e = rand_tensor({1, 4, 4, 4}, rng, -0.5, 0.5);
    auto d = rand_tensor({1, 4, 4, 4}, rng, -0.5, 0.5);
    auto y = pga.forward(e, d, /*training=*/true);
    CHECK(y.shape() == d.shape());
    // equals the explicit two-step composition
    auto ref = pga.psa.forward(pga.eag.forward(e, d, true));
    for (std::size_t i = 0; i < y.data().size(); ++i)
        CHECK(y.data()[i] == Catch::Approx(ref.data()[i]).margin(1e-12));
    auto loss = [&] { return hipf::mean_all(hipf::mul(pga.forward(e, d, true), e)); };
    CHECK(testutil::params_grad_err(loss, ps) < kGradTol);
    CHECK(grad_err([&](auto& t) { return pga.forward(t, d, true); }, e) < kGradTol);
    CHECK(grad_err([&](auto& t) { return pga.forward(e, t, true); }, d) < kGradTol);
}
