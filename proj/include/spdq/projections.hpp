// Copyright 2026 The spdq Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "spdq/types.hpp"

#include <algorithm>
#include <vector>

namespace spdq {

/// Euclidean projection onto the box [0, cap]^n: the per-coordinate clamp.
template <typename Derived>
auto project_value_box(const Eigen::MatrixBase<Derived>& x, double cap) {
    detail::require(cap > 0.0, "project_value_box: cap must be positive");
    return x.array().max(0.0).min(cap).matrix().eval();
}

/// Same clamp applied to a nonnegativity-and-cap box for the mu block.
template <typename Derived>
auto project_mu(const Eigen::MatrixBase<Derived>& mu, double cap) {
    return project_value_box(mu, cap);
}

/// Exact Euclidean projection of one state's lambda row onto
///   { x : 0 <= x <= cap, sum(x) >= eta_s }.
///
/// If the clamped input already meets the sum constraint it is returned
/// unchanged. Otherwise the projection is clamp(input + t, 0, cap) for the
/// unique shift t > 0 that makes the sum equal eta_s; t is located exactly
/// by walking the sorted breakpoints of the piecewise-linear sum, with a
/// bisection fallback if rounding ever drops the root between segments.
inline Vector project_lambda_row(const Eigen::Ref<const Vector>& row, double eta_s, double cap) {
    const Index n = row.size();
    detail::require(eta_s > 0.0, "project_lambda_row: eta must be positive");
    detail::require(eta_s <= cap * static_cast<double>(n) * (1.0 + 1e-12),
                    "project_lambda_row: empty constraint set (eta exceeds n*cap)");

    const auto clamped_sum = [&](double t) {
        double sum = 0.0;
        for (Index i = 0; i < n; ++i) sum += std::clamp(row(i) + t, 0.0, cap);
        return sum;
    };

    Vector x = row.array().max(0.0).min(cap).matrix();
    if (x.sum() >= eta_s) return x;

    std::vector<double> breaks;
    breaks.reserve(static_cast<std::size_t>(2 * n));
    for (Index i = 0; i < n; ++i) {
        if (-row(i) > 0.0) breaks.push_back(-row(i));
        if (cap - row(i) > 0.0) breaks.push_back(cap - row(i));
    }
    std::sort(breaks.begin(), breaks.end());

    double t_prev = 0.0;
    double sum_prev = x.sum();
    for (double t_next : breaks) {
        if (t_next <= t_prev) continue;
        const double mid = 0.5 * (t_prev + t_next);
        int slope = 0;
        for (Index i = 0; i < n; ++i)
            if (row(i) + mid > 0.0 && row(i) + mid < cap) ++slope;
        const double sum_next = sum_prev + slope * (t_next - t_prev);
        if (sum_next >= eta_s && slope > 0) {
            const double t = t_prev + (eta_s - sum_prev) / slope;
            return (row.array() + t).max(0.0).min(cap).matrix();
        }
        t_prev = t_next;
        sum_prev = sum_next;
    }

    // Fallback: bisect on [t_prev, t_hi] where the sum provably reaches eta_s.
    double lo = 0.0, hi = std::max(t_prev, cap - row.minCoeff()) + 1.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-15 * (1.0 + hi); ++iter) {
        const double mid = 0.5 * (lo + hi);
        (clamped_sum(mid) < eta_s ? lo : hi) = mid;
    }
    return (row.array() + hi).max(0.0).min(cap).matrix();
}

/// Projection of the full lambda table onto the product over states of
/// the per-row sets above (the constraint set factors across states).
inline Matrix project_lambda(const Matrix& lam, const Eigen::Ref<const Vector>& eta, double cap) {
    detail::require(lam.rows() == eta.size(), "project_lambda: eta size mismatch");
    Matrix out(lam.rows(), lam.cols());
    for (Index s = 0; s < lam.rows(); ++s)
        out.row(s) = project_lambda_row(lam.row(s).transpose(), eta(s), cap).transpose();
    return out;
}

} // namespace spdq
