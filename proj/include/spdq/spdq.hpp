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
#include "spdq/oracle.hpp"
#include "spdq/projections.hpp"
#include "spdq/schedule.hpp"

#include <cmath>
#include <functional>
#include <optional>

namespace spdq {

/// Compact feasible sets of the constrained saddle-point problem: value
/// box, lambda box (plus the per-state sum floor eta), and mu box.
struct FeasibleSets {
    double v_cap = 0.0;      // sigma / (1 - alpha)
    double lambda_cap = 0.0; // ||eta||_1 / (1 - alpha)
    double mu_cap = 0.0;     // ||eta||_1 / (zeta (1 - alpha))
    Vector eta;

    static FeasibleSets create(double sigma, double discount, Vector eta, double zeta) {
        detail::require(discount >= 0.0 && discount < 1.0, "FeasibleSets: bad discount");
        detail::require(zeta > 0.0, "FeasibleSets: zeta must be positive");
        detail::require((eta.array() > 0.0).all(), "FeasibleSets: eta must be positive");
        const double gap = 1.0 - discount;
        const double eta1 = eta.lpNorm<1>();
        return {sigma / gap, eta1 / gap, eta1 / (zeta * gap), std::move(eta)};
    }
};

/// Step-size rule gamma_k = gamma0 / sqrt(k + shift); shift defaults to 1.
struct StepSchedule {
    double gamma0 = 1.0;
    double shift = 1.0;

    double at(long k) const { return gamma0 / std::sqrt(static_cast<double>(k) + shift); }
};

inline double step_size(const StepSchedule& sched, long k) {
    detail::require(k >= 0, "step_size: negative step index");
    return sched.at(k);
}

/// Current primal pair (Q, V) and dual pair (lambda, mu) plus the step
/// counter. All tables are (state, action); V is per state.
struct IterateState {
    Matrix q;
    Vector v;
    Matrix lam;
    Matrix mu;
    long k = 0;

    void validate(const FeasibleSets& sets, double tol = 1e-9) const {
        detail::internal_check(q.minCoeff() >= -tol && q.maxCoeff() <= sets.v_cap + tol,
                               "iterate: Q escaped its box");
        detail::internal_check(v.minCoeff() >= -tol && v.maxCoeff() <= sets.v_cap + tol,
                               "iterate: V escaped its box");
        detail::internal_check(lam.minCoeff() >= -tol && lam.maxCoeff() <= sets.lambda_cap + tol,
                               "iterate: lambda escaped its box");
        detail::internal_check(((lam.rowwise().sum() - sets.eta).array() >= -tol).all(),
                               "iterate: lambda state sums fell below eta");
        detail::internal_check(mu.minCoeff() >= -tol && mu.maxCoeff() <= sets.mu_cap + tol,
                               "iterate: mu escaped its box");
    }
};

/// Uniform random initialization inside the boxes; lambda is projected
/// onto the sum-floor set afterwards (the box draw alone does not
/// guarantee it). Draw order is fixed for reproducibility: V, then Q,
/// lambda, mu, each filled action-major.
inline IterateState random_iterate(Index n_states, Index n_actions, const FeasibleSets& sets, Rng& rng) {
    IterateState st;
    st.v.resize(n_states);
    for (Index s = 0; s < n_states; ++s) st.v(s) = rng.uniform(0.0, sets.v_cap);
    const auto fill = [&](Matrix& m, double cap) {
        m.resize(n_states, n_actions);
        for (Index a = 0; a < n_actions; ++a)
            for (Index s = 0; s < n_states; ++s) m(s, a) = rng.uniform(0.0, cap);
    };
    fill(st.q, sets.v_cap);
    fill(st.lam, sets.lambda_cap);
    fill(st.mu, sets.mu_cap);
    st.lam = project_lambda(st.lam, sets.eta, sets.lambda_cap);
    st.k = 0;
    return st;
}

/// One observed environment transition and one uniform probe.
struct EnvSample {
    Index s, a, s_next;
    double reward;
};
struct UniformSample {
    Index s_hat, a_hat;
};

/// Euclidean norms of the pre-projection stochastic gradients of one step
/// (primal block, dual block), checked against the K1/K2 caps at runtime.
struct StepGradients {
    double primal_norm = 0.0;
    double dual_norm = 0.0;
};

/// The sparse stochastic update, without the projections. The Q update
/// composes its two sub-steps sequentially in algorithm order (relevant
/// when the sampled and probed actions coincide); the dual updates read
/// the pre-update Q and V.
inline StepGradients spdq_update_unprojected(IterateState& st, const EnvSample& env,
                                             const UniformSample& probe, double gamma,
                                             double discount, const Eigen::Ref<const Vector>& eta) {
    const Index n_states = st.v.size();
    const Index n_actions = st.q.cols();
    const double scale_sa = static_cast<double>(n_states * n_actions);
    const double scale_s = static_cast<double>(n_states);

    const Index s = env.s, a = env.a, s2 = env.s_next;
    const Index su = probe.s_hat, au = probe.a_hat;

    // Pre-update reads.
    const double mu_sa = st.mu(s, a);
    const double lam_ua = st.lam(su, au);
    const double q_ua = st.q(su, au);
    const double q_sa = st.q(s, a);
    const double v_su = st.v(su);
    const double v_s2 = st.v(s2);

    // Primal block.
    st.q(s, a) += gamma * mu_sa;
    st.q(su, au) -= gamma * scale_sa * lam_ua;
    st.v(su) -= gamma * (scale_s * eta(su) - scale_sa * lam_ua);
    st.v(s2) -= gamma * (discount * mu_sa);

    // Dual block (reads pre-update Q, V).
    st.lam(su, au) += gamma * scale_sa * (q_ua - v_su);
    st.mu(s, a) += gamma * (discount * v_s2 + env.reward - q_sa);

    StepGradients g;
    double primal_sq = 0.0;
    if (s == su && a == au)
        primal_sq += std::pow(mu_sa - scale_sa * lam_ua, 2);
    else
        primal_sq += mu_sa * mu_sa + std::pow(scale_sa * lam_ua, 2);
    if (su == s2)
        primal_sq += std::pow(scale_s * eta(su) - scale_sa * lam_ua + discount * mu_sa, 2);
    else
        primal_sq += std::pow(scale_s * eta(su) - scale_sa * lam_ua, 2) +
                     std::pow(discount * mu_sa, 2);
    g.primal_norm = std::sqrt(primal_sq);
    g.dual_norm = std::sqrt(std::pow(scale_sa * (q_ua - v_su), 2) +
                            std::pow(discount * v_s2 + env.reward - q_sa, 2));
    return g;
}

/// One full step of the stochastic primal-dual Q iteration: the sparse
/// update above followed by the projections onto the feasible sets. Only
/// the touched coordinates change.
inline StepGradients spdq_step(IterateState& st, const EnvSample& env, const UniformSample& probe,
                               double gamma, double discount, const FeasibleSets& sets) {
    const StepGradients g = spdq_update_unprojected(st, env, probe, gamma, discount, sets.eta);
    st.q(env.s, env.a) = std::clamp(st.q(env.s, env.a), 0.0, sets.v_cap);
    st.q(probe.s_hat, probe.a_hat) = std::clamp(st.q(probe.s_hat, probe.a_hat), 0.0, sets.v_cap);
    st.v(probe.s_hat) = std::clamp(st.v(probe.s_hat), 0.0, sets.v_cap);
    st.v(env.s_next) = std::clamp(st.v(env.s_next), 0.0, sets.v_cap);
    st.lam.row(probe.s_hat) =
        project_lambda_row(st.lam.row(probe.s_hat).transpose(), sets.eta(probe.s_hat), sets.lambda_cap)
            .transpose();
    st.mu(env.s, env.a) = std::clamp(st.mu(env.s, env.a), 0.0, sets.mu_cap);
    st.k += 1;
    return g;
}

/// Greedy deterministic policy from the averaged Q table.
inline DeterministicPolicy primal_policy(const Matrix& q_bar) { return greedy_policy(q_bar); }

/// Row-normalized stochastic policy from the averaged lambda table; the
/// sum-floor constraint keeps every row sum strictly positive.
inline StochasticPolicy dual_policy(const Matrix& lam_bar) { return row_normalized_policy(lam_bar); }

/// Uniform caps on the stochastic gradient norms: K1 for the primal
/// block, K2 for the dual block.
inline std::pair<double, double> gradient_norm_bounds(Index n_states, Index n_actions,
                                                      const Eigen::Ref<const Vector>& eta,
                                                      double sigma, double alpha, double zeta) {
    detail::require(zeta > 0.0 && alpha < 1.0, "gradient_norm_bounds: need zeta > 0 and alpha < 1");
    const double sa = static_cast<double>(n_states * n_actions);
    const double root13 = std::sqrt(13.0);
    const double k1 = root13 * sa * eta.lpNorm<1>() / (zeta * (1.0 - alpha));
    const double k2 = root13 * sa * sigma / (1.0 - alpha);
    return {k1, k2};
}

enum class ComplexityMode { Gap, Policy };

/// First complexity constant of the T bound (depends on the step size,
/// the drift constant and the distribution floor).
inline double complexity_kappa1(double gamma0, double beta0, double zeta, Index n_states,
                                Index n_actions) {
    const double s = static_cast<double>(n_states);
    const double a_count = static_cast<double>(n_actions);
    return std::pow((12.0 + 4.0 * beta0) / (zeta * zeta * s * s * a_count * a_count * gamma0) +
                        26.0 * gamma0,
                    2);
}

/// Second complexity constant (a polynomial in the step-size constant).
inline double complexity_kappa2(double gamma0) {
    const double root26 = std::sqrt(26.0);
    return (2184.0 + 416.0 * root26) * gamma0 * gamma0 + (1066.0 + 416.0 * root26) * gamma0 +
           832.0 + 16.0 * root26;
}

/// Iteration count sufficient for an epsilon-accurate duality gap (Gap
/// mode) or an epsilon-suboptimal dual policy (Policy mode) with
/// probability 1 - delta. Returned as a (possibly astronomically large)
/// real, rounded up.
inline double sample_complexity(double epsilon, double delta, Index n_states, Index n_actions,
                                double zeta, double alpha, double sigma, double gamma0,
                                double beta0, ComplexityMode mode) {
    detail::require(epsilon > 0.0 && epsilon < 1.0, "sample_complexity: epsilon out of (0,1)");
    detail::require(delta > 0.0 && delta < 1.0 / std::exp(1.0),
                    "sample_complexity: delta out of (0,1/e)");
    const double s = static_cast<double>(n_states);
    const double a_count = static_cast<double>(n_actions);
    const double kappa = std::max(complexity_kappa1(gamma0, beta0, zeta, n_states, n_actions),
                                  complexity_kappa2(gamma0));
    const double gap = 1.0 - alpha;
    double bound = kappa * sigma * sigma * std::pow(s, 4) * std::pow(a_count, 4) /
                   (std::pow(zeta, 4) * std::pow(gap, 4)) / (epsilon * epsilon) *
                   std::log(1.0 / delta);
    if (mode == ComplexityMode::Policy) bound *= s * s / (gap * gap);
    return std::ceil(bound);
}

/// Exact gradient blocks of the measure-scaled Lagrangian at a point.
struct LagrangianGradients {
    Matrix q;
    Vector v;
    Matrix lam;
    Matrix mu;
};

inline LagrangianGradients analytic_gradients(const PrimalDualPoint& point, const SaddleProblem& problem,
                                              const Matrix& m) {
    const MdpModel& model = *problem.model;
    detail::require(m.rows() == model.n_states && m.cols() == model.n_actions,
                    "analytic_gradients: measure shape mismatch");
    LagrangianGradients g;
    g.q = point.lam - m.cwiseProduct(point.mu);
    g.v = problem.eta - point.lam.rowwise().sum();
    g.lam.resize(model.n_states, model.n_actions);
    g.mu.resize(model.n_states, model.n_actions);
    for (Index a = 0; a < model.n_actions; ++a) {
        const Matrix& p_a = model.transitions[static_cast<std::size_t>(a)];
        const Vector weighted_mu = m.col(a).cwiseProduct(point.mu.col(a));
        g.v += model.discount * (p_a.transpose() * weighted_mu);
        g.lam.col(a) = point.q.col(a) - point.v;
        g.mu.col(a) = m.col(a).cwiseProduct(model.discount * (p_a * point.v) +
                                            model.expected_reward_vector(a) - point.q.col(a));
    }
    return g;
}

} // namespace spdq
