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

#include "spdq/mdp.hpp"

#include <cmath>
#include <optional>

namespace spdq {

/// Stationary distribution of a row-stochastic matrix, by solving the
/// singular system (P^T - I) v = 0 with the normalization sum(v) = 1
/// substituted for the last equation. Requires an ergodic chain.
inline Vector stationary_distribution(const Matrix& p) {
    const Index n = p.rows();
    Matrix system = p.transpose() - Matrix::Identity(n, n);
    system.row(n - 1).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs(n - 1) = 1.0;
    Vector v = Eigen::PartialPivLU<Matrix>(system).solve(rhs);
    detail::internal_check((v.array() > 0.0).all(),
                           "stationary_distribution: chain is not ergodic");
    return v;
}

/// Modulus of the second-largest eigenvalue of a row-stochastic matrix.
///
/// Power iteration runs on P^T deflated against its stationary direction
/// (B = P^T - v_inf 1^T, which zeroes the unit eigenvalue and keeps the
/// rest of the spectrum). The modulus is read off a two-dimensional Krylov
/// section [x, Bx] of B, which also covers complex conjugate pairs: once
/// the section spans the dominant invariant subspace, the 2x2 projected
/// block carries the pair and its determinant equals |lambda_2|^2.
inline double second_eigenvalue_modulus(const Matrix& p_theta) {
    const Index n = p_theta.rows();
    detail::require(n >= 1 && p_theta.cols() == n, "second_eigenvalue_modulus: square matrix required");
    if (n == 1) return 0.0;
    const Vector v_inf = stationary_distribution(p_theta);
    const Matrix b = p_theta.transpose() - v_inf * Eigen::RowVectorXd::Ones(n);

    Rng rng(0x5eed);
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = rng.uniform(-1.0, 1.0);
    x.normalize();

    const auto section_modulus = [&](const Vector& y) -> double {
        Vector by = b * y;
        const double norm_by = by.norm();
        if (norm_by < 1e-14) return 0.0; // rank-one chain or kernel direction
        // Orthonormal basis of span{y, By}, then the projected 2x2 block.
        Vector q1 = y.normalized();
        Vector q2 = by - q1.dot(by) * q1;
        const double q2_norm = q2.norm();
        if (q2_norm < 1e-14 * norm_by) {
            // y is (numerically) an eigenvector; Rayleigh quotient suffices.
            return std::abs(q1.dot(b * q1));
        }
        q2 /= q2_norm;
        Eigen::Matrix2d h;
        h(0, 0) = q1.dot(b * q1);
        h(0, 1) = q1.dot(b * q2);
        h(1, 0) = q2.dot(b * q1);
        h(1, 1) = q2.dot(b * q2);
        const double tr = h.trace();
        const double det = h.determinant();
        const double disc = tr * tr - 4.0 * det;
        if (disc < 0.0) return std::sqrt(det); // complex pair
        const double root = std::sqrt(disc);
        return std::max(std::abs(0.5 * (tr + root)), std::abs(0.5 * (tr - root)));
    };

    double estimate = 0.0;
    bool have_estimate = false;
    int stable_checks = 0;
    const int max_iters = 200000;
    for (int k = 0; k < max_iters; ++k) {
        Vector next = b * x;
        const double norm = next.norm();
        if (norm < 1e-300) return 0.0;
        x = next / norm;
        if (k < 5 || k % 4 != 0) continue;
        const double mod = section_modulus(x);
        if (have_estimate && std::abs(mod - estimate) <= 1e-11 * (1.0 + estimate)) {
            if (++stable_checks >= 2) return mod;
        } else {
            stable_checks = 0;
        }
        estimate = mod;
        have_estimate = true;
    }
    throw NumericalError("second_eigenvalue_modulus: no convergence after iteration cap; partial estimate " +
                         std::to_string(estimate));
}

/// Smallest k* with |lambda_2|^k <= 1/(k+1) for all k >= k*, from the
/// closed form max(0, ceil((2 ln l2 + 2) / (ln l2)^2)).
inline long mixing_threshold_kstar(double lambda2) {
    detail::require(lambda2 > 0.0 && lambda2 < 1.0, "mixing_threshold_kstar: lambda2 must be in (0,1)");
    const double log_l2 = std::log(lambda2);
    const double value = (2.0 * log_l2 + 2.0) / (log_l2 * log_l2);
    if (value <= 0.0) return 0;
    return static_cast<long>(std::ceil(value));
}

/// Diagnostics of the drift sequence against the spectral decay model:
/// the smallest c with beta_k <= c |lambda_2|^k over the horizon, the
/// harmonic majorant constant beta0 = c * |lambda_2|^{-k*}, and whether
/// both majorizations held.
struct MixingReport {
    double lambda2 = 0.0;
    long kstar = 0;
    double c = 0.0;
    double beta0 = 0.0;
    bool geometric_bound_ok = false;
    bool harmonic_bound_ok = false;
};

/// Time-varying state-action distribution induced by a fixed behavior
/// policy: v_k = (P_theta^T)^k v_0 and tau_{a,k}(s) = v_k(s) theta_s(a).
/// Sequential access to v_k is O(|S|^2) per step through a memoized last
/// value. Not thread-safe: use one instance per run thread.
class DistributionSchedule {
  public:
    DistributionSchedule(const MdpModel& model, StochasticPolicy behavior, Vector v0,
                         std::optional<double> zeta_override = std::nullopt,
                         std::optional<long> zeta_horizon = std::nullopt)
        : behavior_(std::move(behavior)), v0_(std::move(v0)) {
        behavior_.validate();
        detail::require_config(behavior_.n_states() == model.n_states &&
                                   behavior_.n_actions() == model.n_actions,
                               "schedule: behavior policy shape mismatch");
        detail::require_config(v0_.size() == model.n_states, "schedule: v0 size mismatch");
        detail::require_config((v0_.array() >= 0.0).all() && std::abs(v0_.sum() - 1.0) <= kRowSumTol,
                               "schedule: v0 must be a distribution");
        detail::require_config((behavior_.probs.array() > 0.0).all(),
                               "schedule: behavior policy must explore every action");
        p_theta_ = transition_matrix_under_policy(model, behavior_);
        v_infinity_ = stationary_distribution(p_theta_);
        lambda2_ = second_eigenvalue_modulus(p_theta_);
        kstar_ = lambda2_ > 0.0 && lambda2_ < 1.0 ? mixing_threshold_kstar(lambda2_) : 0;
        v_last_ = v0_;
        if (zeta_override) {
            detail::require_config(*zeta_override > 0.0, "schedule: zeta override must be positive");
            zeta_ = *zeta_override;
        } else {
            zeta_ = estimate_zeta(zeta_horizon ? *zeta_horizon : default_mixing_horizon());
        }
    }

    const Matrix& p_theta() const { return p_theta_; }
    const StochasticPolicy& behavior() const { return behavior_; }
    const Vector& initial_distribution() const { return v0_; }
    const Vector& stationary() const { return v_infinity_; }
    double lambda2() const { return lambda2_; }
    long kstar() const { return kstar_; }
    double zeta() const { return zeta_; }

    long default_mixing_horizon() const { return std::max<long>(10 * kstar_, 1000); }

    /// State distribution v_k, memoized for sequential access.
    const Vector& state_distribution_at(long k) {
        detail::require(k >= 0, "state_distribution_at: negative step");
        if (k < k_last_) {
            k_last_ = 0;
            v_last_ = v0_;
        }
        while (k_last_ < k) {
            v_last_ = p_theta_.transpose() * v_last_;
            ++k_last_;
        }
        return v_last_;
    }

    /// Diagonal of M_k as a (state, action) table: v_k(s) * theta_s(a).
    Matrix m_matrix_at(long k) {
        const Vector& v = state_distribution_at(k);
        return v.asDiagonal() * behavior_.probs;
    }

    /// Diagonal of the limit M_infinity.
    Matrix m_infinity() const { return v_infinity_.asDiagonal() * behavior_.probs; }

    /// Smallest state-action probability over the transient (k from 1 to
    /// `horizon`) and the stationary limit.
    double estimate_zeta(long horizon) {
        double floor = m_infinity().minCoeff();
        Vector v = v0_;
        for (long k = 1; k <= horizon; ++k) {
            v = p_theta_.transpose() * v;
            for (Index s = 0; s < v.size(); ++s)
                floor = std::min(floor, v(s) * behavior_.probs.row(s).minCoeff());
        }
        detail::require_config(floor > 0.0, "estimate_zeta: schedule has a vanishing state-action probability");
        return floor;
    }

    /// Drift bound beta_k = zeta^{-2} max_s |v_{k+1}(s) - v_k(s)|. With
    /// `check` set, also verifies the induced spectral-norm inequality
    /// ||M_k^{-1} - M_{k+1}^{-1}||_2 <= beta_k.
    double beta_at(long k, bool check = false) {
        const Vector v_k = state_distribution_at(k);
        const Vector v_next = state_distribution_at(k + 1);
        const double beta = (v_next - v_k).lpNorm<Eigen::Infinity>() / (zeta_ * zeta_);
        if (check) {
            const Matrix m_k = v_k.asDiagonal() * behavior_.probs;
            const Matrix m_next = v_next.asDiagonal() * behavior_.probs;
            const double norm =
                (m_k.cwiseInverse() - m_next.cwiseInverse()).lpNorm<Eigen::Infinity>();
            detail::internal_check(norm <= beta + 1e-12,
                                   "beta_at: drift bound fails to dominate the inverse-measure step");
        }
        return beta;
    }

    /// Fits the geometric majorant of beta_k over the horizon (ignoring
    /// steps where the drift has decayed into floating-point noise) and
    /// confirms the induced harmonic majorant beta_0 / (k+1).
    MixingReport verify_mixing_bounds(long horizon) {
        MixingReport report;
        report.lambda2 = lambda2_;
        report.kstar = kstar_;
        detail::internal_check(lambda2_ < 1.0, "verify_mixing_bounds: chain does not mix");

        const double noise_floor = 1e-13 / (zeta_ * zeta_);
        double c = 0.0;
        report.geometric_bound_ok = true;
        for (long k = 0; k <= horizon; ++k) {
            const double beta = beta_at(k);
            if (beta <= noise_floor) continue;
            const double decay = std::pow(lambda2_, static_cast<double>(k));
            if (decay <= 0.0) {
                report.geometric_bound_ok = false;
                continue;
            }
            c = std::max(c, beta / decay);
        }
        report.c = c;
        for (long k = 0; report.geometric_bound_ok && k <= horizon; ++k) {
            const double beta = beta_at(k);
            if (beta <= noise_floor) continue;
            if (beta > c * std::pow(lambda2_, static_cast<double>(k)) * (1.0 + 1e-12))
                report.geometric_bound_ok = false;
        }

        const double d = lambda2_ > 0.0 ? std::pow(lambda2_, -static_cast<double>(kstar_)) : 1.0;
        report.beta0 = c * d;
        report.harmonic_bound_ok = true;
        for (long k = 0; k <= horizon; ++k) {
            if (beta_at(k) > report.beta0 / static_cast<double>(k + 1) + noise_floor) {
                report.harmonic_bound_ok = false;
                break;
            }
        }
        return report;
    }

  private:
    StochasticPolicy behavior_;
    Vector v0_;
    Matrix p_theta_;
    Vector v_infinity_;
    double lambda2_ = 0.0;
    long kstar_ = 0;
    double zeta_ = 0.0;
    long k_last_ = 0;
    Vector v_last_;
};

} // namespace spdq
