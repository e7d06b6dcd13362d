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

#include "spdq/run.hpp"

namespace spdq {

/// Tabular Q-learning iterate; Q is clamped to the same value box the
/// primal-dual iteration uses, for a fair comparison.
struct QLearningState {
    Matrix q;
    Matrix visit_counts;
};

using TableCheckpointFn = std::function<void(long step, const Matrix& table)>;

/// Off-policy tabular Q-learning over a behavior-policy stream, with the
/// shared step-size rule gamma_k on the visited pair:
///   Q(s,a) <- (1 - gamma_k) Q(s,a) + gamma_k (r + alpha max_a' Q(s',a')).
inline QLearningState q_learning_run(TransitionStream& stream, Index n_states, Index n_actions,
                                     double sigma, double discount, const RunConfig& cfg,
                                     const TableCheckpointFn& on_checkpoint = {}) {
    detail::require_config(cfg.total_steps >= 1, "q_learning_run: T must be >= 1");
    const double cap = sigma / (1.0 - discount);
    QLearningState st{Matrix::Zero(n_states, n_actions), Matrix::Zero(n_states, n_actions)};

    std::size_t next_checkpoint = 0;
    const auto emit = [&](long k) {
        if (!on_checkpoint) return;
        while (next_checkpoint < cfg.checkpoints.size() && cfg.checkpoints[next_checkpoint] == k) {
            on_checkpoint(k, st.q);
            ++next_checkpoint;
        }
    };

    for (long k = 0; k < cfg.total_steps; ++k) {
        emit(k);
        const auto sample = stream.next();
        detail::require_config(sample.has_value(), "q_learning_run: stream exhausted before T");
        const double gamma = cfg.step.at(k);
        const double target = sample->reward + discount * st.q.row(sample->s_next).maxCoeff();
        double& cell = st.q(sample->s, sample->a);
        cell = std::clamp((1.0 - gamma) * cell + gamma * target, 0.0, cap);
        st.visit_counts(sample->s, sample->a) += 1.0;
    }
    emit(cfg.total_steps);
    return st;
}

/// Empirical state-action frequency table.
struct EmpiricalMeasure {
    Matrix counts;
    long total = 0;

    static EmpiricalMeasure zero(Index n_states, Index n_actions) {
        return {Matrix::Zero(n_states, n_actions), 0};
    }

    void observe(Index s, Index a) {
        counts(s, a) += 1.0;
        ++total;
    }

    Matrix probabilities() const { return counts / static_cast<double>(std::max<long>(total, 1)); }

    /// Probabilities with unvisited pairs floored at one pseudo-count.
    Matrix floored_probabilities() const {
        return counts.cwiseMax(1.0) / static_cast<double>(std::max<long>(total, 1));
    }
};

/// Stochastic primal-dual iteration on the plain value-function LP with
/// behavior-policy samples. Its raw dual variables converge to the
/// measure-scaled M^{-1} lambda*; the output multiplies the averaged raw
/// dual by the empirical measure estimate to undo the scaling. The
/// checkpoint callback receives the corrected dual table. Passing
/// `exact_measure` swaps the empirical estimate for the true measure
/// (ablation of the estimation error).
inline Matrix spd_rl_corrected_run(TransitionStream& stream, Index n_states, Index n_actions,
                                   double sigma, double discount, const RunConfig& cfg,
                                   const TableCheckpointFn& on_checkpoint = {},
                                   const Matrix* exact_measure = nullptr) {
    cfg.validate();
    const FeasibleSets sets = FeasibleSets::create(sigma, discount, cfg.eta, cfg.zeta);
    Rng init_rng = Rng::stream(cfg.seed, streams::kInit);

    Vector v(n_states);
    for (Index s = 0; s < n_states; ++s) v(s) = init_rng.uniform(0.0, sets.v_cap);
    Matrix lam(n_states, n_actions); // raw (measure-scaled) dual, mu-box scale
    for (Index a = 0; a < n_actions; ++a)
        for (Index s = 0; s < n_states; ++s) lam(s, a) = init_rng.uniform(0.0, sets.mu_cap);

    Matrix lam_sum = Matrix::Zero(n_states, n_actions);
    EmpiricalMeasure measure = EmpiricalMeasure::zero(n_states, n_actions);

    const auto corrected = [&](long count) {
        // Before the first step, fall back to the initial iterate itself.
        const Matrix lam_bar = count == 0 ? lam : (lam_sum / static_cast<double>(count)).eval();
        const Matrix scale = exact_measure ? *exact_measure : measure.floored_probabilities();
        return scale.cwiseProduct(lam_bar).eval();
    };

    std::size_t next_checkpoint = 0;
    const auto emit = [&](long k) {
        if (!on_checkpoint) return;
        while (next_checkpoint < cfg.checkpoints.size() && cfg.checkpoints[next_checkpoint] == k) {
            on_checkpoint(k, corrected(k));
            ++next_checkpoint;
        }
    };

    for (long k = 0; k < cfg.total_steps; ++k) {
        emit(k);
        lam_sum += lam;
        const auto sample = stream.next();
        detail::require_config(sample.has_value(), "spd_rl_corrected_run: stream exhausted before T");
        measure.observe(sample->s, sample->a);

        const double gamma = cfg.step.at(k);
        const double lam_pre = lam(sample->s, sample->a);
        const double bellman_gap = sample->reward + discount * v(sample->s_next) - v(sample->s);

        v -= gamma * cfg.eta;
        v(sample->s_next) -= gamma * discount * lam_pre;
        v(sample->s) += gamma * lam_pre;
        v = v.array().max(0.0).min(sets.v_cap).matrix();

        lam(sample->s, sample->a) =
            std::clamp(lam_pre + gamma * bellman_gap, 0.0, sets.mu_cap);
    }
    emit(cfg.total_steps);
    return corrected(cfg.total_steps);
}

/// One deterministic projected primal-dual step with the full gradients
/// of the measure-scaled Lagrangian (the model-based reference the
/// stochastic iteration randomizes).
inline PrimalDualPoint deterministic_pd_step(const PrimalDualPoint& point, const SaddleProblem& problem,
                                             const Matrix& m_k, double gamma, const FeasibleSets& sets) {
    const LagrangianGradients g = analytic_gradients(point, problem, m_k);
    PrimalDualPoint next;
    next.q = project_value_box(point.q - gamma * g.q, sets.v_cap);
    next.v = project_value_box(point.v - gamma * g.v, sets.v_cap);
    next.lam = project_lambda(point.lam + gamma * g.lam, sets.eta, sets.lambda_cap);
    next.mu = project_mu(point.mu + gamma * g.mu, sets.mu_cap);
    return next;
}

} // namespace spdq
