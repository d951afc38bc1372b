#pragma once

#include "hiperformer/core/tensor.hpp"

namespace hipf {

// Central finite differences against the recorded analytic gradient.
// Returns max over elements of |analytic - numeric| / max(1, |analytic|).
// Run with T = double; float round-off swamps the 1e-4 tolerance.
// max_elems > 0 checks only that many evenly spaced elements (for large
// tensors where perturbing every element is too slow).
// kink_tol > 0 skips elements whose two one-sided slopes disagree by more
// than kink_tol * max(1, |numeric|): there the probe straddles a kink of a
// piecewise-smooth function (ReLU, max-pool switch) and central differences
// say nothing about the subgradient the analytic pass picked.
template <typename T, typename F>
T finite_diff_gradcheck(F f, Tensor<T>& x, T h = T(1e-4), i64 max_elems = -1, T kink_tol = T(0)) {
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor<T> loss = f(x);
    require(loss.size() == 1, "gradcheck: f must return a scalar");
    backward(loss);
    std::vector<T> analytic = x.grad();

    std::size_t n = x.data().size();
    std::size_t stride = 1;
    if (max_elems > 0 && n > static_cast<std::size_t>(max_elems))
        stride = (n + static_cast<std::size_t>(max_elems) - 1) / static_cast<std::size_t>(max_elems);
    T max_err = T(0);
    NoGradGuard ng;
    T mid = T(0);
    if (kink_tol > T(0)) mid = f(x).item();
    for (std::size_t i = 0; i < n; i += stride) {
        T saved = x.data()[i];
        x.data()[i] = saved + h;
        T up = f(x).item();
        x.data()[i] = saved - h;
        T dn = f(x).item();
        x.data()[i] = saved;
        T numeric = (up - dn) / (T(2) * h);
        T denom = std::max(T(1), std::abs(analytic[i]));
        if (kink_tol > T(0)) {
            T slope_plus = (up - mid) / h, slope_minus = (mid - dn) / h;
            if (std::abs(slope_plus - slope_minus) > kink_tol * denom) continue;
        }
        max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
    }
    return max_err;
}

}  // namespace hipf
