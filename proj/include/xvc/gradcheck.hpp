// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "xvc/tensor.hpp"

#include <cmath>
#include <functional>

namespace xvc {

using ScalarFn = std::function<Tensor(const Tensor &)>;

/// Analytic gradient of scalar `f` at `x` via backward.
inline std::vector<double> analytic_gradient(const ScalarFn &f, const Tensor &x) {
    Tensor leaf = x.as_leaf(true);
    Tensor loss = f(leaf);
    backward(loss);
    return {leaf.grad().begin(), leaf.grad().end()};
}

/// Central differences of scalar `f` at `x`.
inline std::vector<double> numeric_gradient(const ScalarFn &f, const Tensor &x, double eps) {
    detail::require(eps > 0.0, "finite_difference_check: eps must be positive");
    std::vector<double> probe(x.data().begin(), x.data().end());
    std::vector<double> out(probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double up = f(Tensor(x.shape(), probe)).item();
        probe[i] = orig - eps;
        const double down = f(Tensor(x.shape(), probe)).item();
        probe[i] = orig;
        out[i] = (up - down) / (2.0 * eps);
    }
    return out;
}

/// max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    detail::require(analytic.size() == numeric.size(), "max_relative_error: size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

/// Compares the backward of `f` against central differences of `f` itself.
inline double finite_difference_check(const ScalarFn &f, const Tensor &x, double eps = 1e-5) {
    detail::require(eps > 0.0, "finite_difference_check: eps must be positive");
    const auto a = analytic_gradient(f, x);
    const auto n = numeric_gradient(f, x, eps);
    return max_relative_error(a, n);
}

/// For straight-through ops: the backward of `f` is compared against central
/// differences of `surrogate`, the smooth function whose derivative `f`
/// declares in its backward pass.
inline double finite_difference_check(const ScalarFn &f, const ScalarFn &surrogate, const Tensor &x,
                                      double eps = 1e-5) {
    detail::require(eps > 0.0, "finite_difference_check: eps must be positive");
    const auto a = analytic_gradient(f, x);
    const auto n = numeric_gradient(surrogate, x, eps);
    return max_relative_error(a, n);
}

/// Identity in the forward pass with a deliberately wrong backward (gradient
/// scaled by `factor`). Negative-control fixture for gradient checks.
inline Tensor corrupt_backward(const Tensor &a, double factor = 2.0) {
    return Tensor::make_op("corrupt_backward", a.shape(), {a.data().begin(), a.data().end()}, {a},
                           [factor](std::span<const double>, std::span<const double> g, std::span<double *const> gi) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   gi[0][i] += factor * g[i];
                               }
                           });
}

} // namespace xvc
