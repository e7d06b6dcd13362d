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

namespace spdq {

/// Saddle-point problem data: the MDP, the positive per-state weight
/// vector eta of the primal LP objective, the diagonal state-action
/// measure (stored as a (state, action) table of its diagonal), and the
/// uniform floor zeta of that diagonal.
struct SaddleProblem {
    const MdpModel* model = nullptr;
    Vector eta;
    Matrix m; // m(s, a) = measure of observing (s, a)
    double zeta = 0.0;

    SaddleProblem() = default;
    SaddleProblem(const MdpModel& mdl, Vector eta_in, Matrix m_in, double zeta_in)
        : model(&mdl), eta(std::move(eta_in)), m(std::move(m_in)), zeta(zeta_in) {
        detail::require(eta.size() == mdl.n_states, "SaddleProblem: eta size mismatch");
        detail::require((eta.array() > 0.0).all(), "SaddleProblem: eta must be positive");
        detail::require(m.rows() == mdl.n_states && m.cols() == mdl.n_actions,
                        "SaddleProblem: measure shape mismatch");
        detail::require(zeta > 0.0, "SaddleProblem: zeta must be positive");
        detail::require((m.array() >= zeta - 1e-12).all(),
                        "SaddleProblem: measure entry below zeta");
    }
};

/// One primal-dual point: Q and V on the primal side, lambda and mu on the
/// dual side. No intrinsic feasibility; the algorithm enforces it through
/// projections.
struct PrimalDualPoint {
    Matrix q;   // (state, action)
    Vector v;   // (state)
    Matrix lam; // (state, action)
    Matrix mu;  // (state, action)
};

/// Exact solution of the primal/dual LP pair together with the measure-
/// scaled dual, and the certified optimal policy.
struct OracleSolution {
    Vector v_star;
    Matrix q_star;           // (state, action)
    DeterministicPolicy pi_star;
    Matrix lambda_star;      // (state, action); zero off the optimal action
    Matrix mu_star_scaled;   // M^{-1} lambda_star
};

namespace detail {

/// Q-table R_a + discount * P_a * v for all actions.
inline Matrix action_values(const MdpModel& model, const Vector& v) {
    Matrix q(model.n_states, model.n_actions);
    for (Index a = 0; a < model.n_actions; ++a)
        q.col(a) = model.expected_reward_vector(a) +
                   model.discount * (model.transitions[static_cast<std::size_t>(a)] * v);
    return q;
}

} // namespace detail

/// Solves the MDP exactly. Value iteration locates the optimal policy (the
/// stopping rule converts `tol` on the value into a sup-norm-difference
/// threshold through the contraction bound), then one exact policy
/// evaluation per policy-improvement round removes the remaining error.
/// The dual solution is recovered from the optimal policy: the per-state
/// nonzero entries of lambda solve (I - discount * P_pi^T) w = eta.
inline OracleSolution solve_optimal(const SaddleProblem& problem, double tol = 1e-10) {
    detail::require(tol > 0.0, "solve_optimal: tol must be positive");
    const MdpModel& model = *problem.model;
    const double alpha = model.discount;

    Vector v = Vector::Zero(model.n_states);
    if (alpha > 0.0) {
        const double stop = tol * (1.0 - alpha) / (2.0 * alpha);
        for (int iter = 0; iter < 1000000; ++iter) {
            const Vector next = detail::action_values(model, v).rowwise().maxCoeff();
            const double diff = (next - v).lpNorm<Eigen::Infinity>();
            v = next;
            if (diff <= stop) break;
        }
    } else {
        v = detail::action_values(model, v).rowwise().maxCoeff();
    }

    // Policy-improvement rounds on top of the VI estimate; each round is an
    // exact linear solve, so the loop terminates at the optimal policy.
    DeterministicPolicy pi = greedy_policy(detail::action_values(model, v));
    Matrix q;
    for (int round = 0; round < 1000; ++round) {
        v = evaluate_policy(model, pi);
        q = detail::action_values(model, v);
        DeterministicPolicy improved = greedy_policy(q);
        if (improved == pi) break;
        pi = improved;
    }

    OracleSolution sol;
    sol.v_star = v;
    sol.q_star = q;
    sol.pi_star = pi;

    const double bellman_residual =
        (v - detail::action_values(model, v).rowwise().maxCoeff()).lpNorm<Eigen::Infinity>();
    detail::internal_check(bellman_residual <= 1e-8, "solve_optimal: Bellman residual too large");

    const Matrix p_pi =
        transition_matrix_under_policy(model, StochasticPolicy::from_deterministic(pi, model.n_actions));
    const Matrix system = Matrix::Identity(model.n_states, model.n_states) - alpha * p_pi.transpose();
    const Vector w = Eigen::PartialPivLU<Matrix>(system).solve(problem.eta);

    sol.lambda_star = Matrix::Zero(model.n_states, model.n_actions);
    for (Index s = 0; s < model.n_states; ++s) sol.lambda_star(s, pi(s)) = w(s);
    sol.mu_star_scaled = sol.lambda_star.cwiseQuotient(problem.m);

    detail::internal_check((system * w - problem.eta).lpNorm<Eigen::Infinity>() <= 1e-10,
                           "solve_optimal: dual solve residual too large");
    // Strong duality of the LP pair: eta^T V* equals lambda*^T R.
    double dual_value = 0.0;
    for (Index s = 0; s < model.n_states; ++s) dual_value += w(s) * model.expected_reward(s, pi(s));
    detail::internal_check(std::abs(problem.eta.dot(v) - dual_value) <=
                               1e-8 * (1.0 + std::abs(dual_value)),
                           "solve_optimal: strong duality violated");
    return sol;
}

/// Lagrangian of the Q-augmented LP with the identity measure:
/// eta^T V + mu^T (alpha P V + R - Q) + lambda^T (Q - (1 (x) I) V).
inline double lagrangian_I(const PrimalDualPoint& point, const SaddleProblem& problem) {
    const MdpModel& model = *problem.model;
    detail::require(point.q.rows() == model.n_states && point.q.cols() == model.n_actions &&
                        point.v.size() == model.n_states &&
                        point.lam.rows() == model.n_states && point.lam.cols() == model.n_actions &&
                        point.mu.rows() == model.n_states && point.mu.cols() == model.n_actions,
                    "lagrangian_I: dimension mismatch");
    double value = problem.eta.dot(point.v);
    for (Index a = 0; a < model.n_actions; ++a) {
        const Vector constraint = model.discount * (model.transitions[static_cast<std::size_t>(a)] * point.v) +
                                  model.expected_reward_vector(a) - point.q.col(a);
        value += point.mu.col(a).dot(constraint);
        value += point.lam.col(a).dot(point.q.col(a) - point.v);
    }
    return value;
}

/// Lagrangian of the measure-scaled LP; the equality block is weighted by
/// the diagonal measure m. With m = 1 it reduces to lagrangian_I.
inline double lagrangian_M(const PrimalDualPoint& point, const SaddleProblem& problem, const Matrix& m) {
    const MdpModel& model = *problem.model;
    detail::require(m.rows() == model.n_states && m.cols() == model.n_actions,
                    "lagrangian_M: measure shape mismatch");
    PrimalDualPoint weighted = point;
    weighted.mu = point.mu.cwiseProduct(m);
    return lagrangian_I(weighted, problem);
}

inline double lagrangian_M(const PrimalDualPoint& point, const SaddleProblem& problem) {
    return lagrangian_M(point, problem, problem.m);
}

/// Pseudo duality gap D(x, y) = L_I(x, y*) - L_I(x*, y) of an averaged
/// iterate pair. `averaged.mu` must be the measure-weighted dual average.
/// The same quantity is recomputed through the policy form
///   sum_a lambda_a^T (I - alpha P_pi_d) (V* - V^{pi_d}),
/// with pi_d the row-normalized dual policy; the two must agree to 1e-8,
/// otherwise an internal-consistency error is raised.
inline double duality_gap(const PrimalDualPoint& averaged, const OracleSolution& sol,
                          const SaddleProblem& problem) {
    const MdpModel& model = *problem.model;

    PrimalDualPoint left{averaged.q, averaged.v, sol.lambda_star, sol.lambda_star};
    PrimalDualPoint right{sol.q_star, sol.v_star, averaged.lam, averaged.mu};
    const double gap = lagrangian_I(left, problem) - lagrangian_I(right, problem);

    const StochasticPolicy dual_pi = row_normalized_policy(averaged.lam);
    const Matrix p_dual = transition_matrix_under_policy(model, dual_pi);
    const Vector v_dual = evaluate_policy(model, dual_pi);
    const Vector lam_state_sums = averaged.lam.rowwise().sum();
    const double representation =
        lam_state_sums.dot((sol.v_star - v_dual) -
                           model.discount * (p_dual * (sol.v_star - v_dual)));

    detail::internal_check(std::abs(gap - representation) <= 1e-8,
                           "duality_gap: direct and policy representations disagree");
    detail::internal_check(gap >= -1e-8, "duality_gap: negative gap beyond tolerance");
    return gap;
}

/// Certified norm caps on the saddle-point solution.
struct BoundSet {
    double v_sup;      // sigma / (1 - alpha)
    double v_two;      // sqrt(|S|) sigma / (1 - alpha)
    double lambda_one; // ||eta||_1 / (1 - alpha)
    double mu_sup;     // ||eta||_1 / (zeta (1 - alpha))
};

inline BoundSet solution_bounds(const SaddleProblem& problem) {
    detail::require(problem.zeta > 0.0, "solution_bounds: zeta must be positive");
    const MdpModel& model = *problem.model;
    const double gap = 1.0 - model.discount;
    const double eta1 = problem.eta.lpNorm<1>();
    return {model.sigma / gap, std::sqrt(static_cast<double>(model.n_states)) * model.sigma / gap,
            eta1 / gap, eta1 / (problem.zeta * gap)};
}

/// Computes the bounds and verifies the solution satisfies all of them
/// (plus the per-state floor sum_a lambda*_a >= eta).
inline BoundSet solution_bounds(const SaddleProblem& problem, const OracleSolution& sol) {
    const BoundSet b = solution_bounds(problem);
    const double slack = 1e-9;
    detail::internal_check(sol.v_star.lpNorm<Eigen::Infinity>() <= b.v_sup + slack &&
                               sol.q_star.lpNorm<Eigen::Infinity>() <= b.v_sup + slack,
                           "solution_bounds: sup-norm primal bound violated");
    detail::internal_check(sol.v_star.norm() <= b.v_two + slack,
                           "solution_bounds: 2-norm primal bound violated");
    detail::internal_check(sol.lambda_star.lpNorm<1>() <= b.lambda_one + slack,
                           "solution_bounds: lambda 1-norm bound violated");
    detail::internal_check(sol.mu_star_scaled.lpNorm<Eigen::Infinity>() <= b.mu_sup + slack,
                           "solution_bounds: mu sup-norm bound violated");
    detail::internal_check(
        ((sol.lambda_star.rowwise().sum() - problem.eta).array() >= -slack).all(),
        "solution_bounds: lambda state sums fall below eta");
    return b;
}

/// Upper bound on ||V* - V^{pi_d}||_inf induced by a duality gap value:
/// gap / (min_s eta(s) * (1 - alpha)).
inline double policy_suboptimality_bound(double gap, const SaddleProblem& problem) {
    detail::require(gap >= 0.0, "policy_suboptimality_bound: gap must be nonnegative");
    return gap / (problem.eta.minCoeff() * (1.0 - problem.model->discount));
}

} // namespace spdq
