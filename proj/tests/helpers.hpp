#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "hiperformer/core/gradcheck.hpp"
#include "hiperformer/core/param.hpp"

namespace testutil {

inline hipf::Tensor<double> rand_tensor(const hipf::Shape& s, hipf::Rng& rng, double lo = -1.0,
                                        double hi = 1.0) {
    hipf::Tensor<double> t = hipf::Tensor<double>::zeros(s);
    hipf::init_uniform(t, rng, lo, hi);
    return t;
}

// Max relative gradient error of `op` at `x`, probing the full Jacobian via a
// fixed random weighting: loss = sum(op(x) * w).
template <typename Op>
double grad_err(Op op, hipf::Tensor<double>& x, unsigned seed = 123, double h = 1e-4) {
    hipf::Shape out_shape;
    {
        hipf::NoGradGuard ng;
        out_shape = op(x).shape();
    }
    hipf::Rng rng(seed);
    hipf::Tensor<double> w = rand_tensor(out_shape, rng, 0.5, 1.5);
    auto f = [&](hipf::Tensor<double>& t) { return hipf::sum_all(hipf::mul(op(t), w)); };
    return hipf::finite_diff_gradcheck<double>(f, x, h);
}

// Worst finite-difference error across every registered parameter of a
// module, with the inputs held fixed. `loss` recomputes the scalar loss.
template <typename LossFn>
double params_grad_err(LossFn loss, hipf::ParamStore<double>& ps, double h = 1e-4,
                       hipf::i64 max_elems = -1) {
    double worst = 0.0;
    for (auto& [name, p] : ps.params()) {
        auto f = [&](hipf::Tensor<double>&) { return loss(); };
        double err = hipf::finite_diff_gradcheck<double>(f, p, h, max_elems);
        INFO("parameter " << name);
        worst = std::max(worst, err);
    }
    return worst;
}

constexpr double kGradTol = 1e-4;

}  // namespace testutil
