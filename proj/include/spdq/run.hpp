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

#include "spdq/spdq.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace spdq {

/// Source of environment transitions. Returns nullopt once exhausted;
/// the built-in streams below never exhaust.
class TransitionStream {
  public:
    virtual ~TransitionStream() = default;
    virtual std::optional<EnvSample> next() = 0;
};

/// One continuous Markov-chain trajectory under the behavior policy: the
/// state-action marginal at step k is exactly tau_k of the schedule.
class TrajectoryStream : public TransitionStream {
  public:
    TrajectoryStream(const MdpModel& model, StochasticPolicy behavior, const Vector& v0, Rng rng)
        : model_(&model), behavior_(std::move(behavior)), rng_(rng) {
        state_ = rng_.categorical(v0);
    }

    std::optional<EnvSample> next() override {
        const Index a = rng_.categorical(behavior_.probs.row(state_).transpose());
        const auto [s_next, reward] = sample_step(*model_, state_, a, rng_);
        EnvSample sample{state_, a, s_next, reward};
        state_ = s_next;
        return sample;
    }

  private:
    const MdpModel* model_;
    StochasticPolicy behavior_;
    Rng rng_;
    Index state_;
};

/// Independent draws (s_k, a_k) ~ tau_k each step, used by the
/// unbiasedness tests; the transition and reward are still sampled from
/// the model.
class IidScheduleStream : public TransitionStream {
  public:
    IidScheduleStream(const MdpModel& model, DistributionSchedule& sched, Rng rng)
        : model_(&model), sched_(&sched), rng_(rng) {}

    std::optional<EnvSample> next() override {
        const Vector& v = sched_->state_distribution_at(k_);
        const Index s = rng_.categorical(v);
        const Index a = rng_.categorical(sched_->behavior().probs.row(s).transpose());
        const auto [s_next, reward] = sample_step(*model_, s, a, rng_);
        ++k_;
        return EnvSample{s, a, s_next, reward};
    }

  private:
    const MdpModel* model_;
    DistributionSchedule* sched_;
    Rng rng_;
    long k_ = 0;
};

/// Pre-recorded sample list (tests, replayed logs). Exhausts.
class RecordedStream : public TransitionStream {
  public:
    explicit RecordedStream(std::vector<EnvSample> samples) : samples_(std::move(samples)) {}

    std::optional<EnvSample> next() override {
        if (pos_ >= samples_.size()) return std::nullopt;
        return samples_[pos_++];
    }

  private:
    std::vector<EnvSample> samples_;
    std::size_t pos_ = 0;
};

/// Running means of the pre-update iterates. The mu average is weighted
/// by the step measure M_k (diagnostic mode only); Q, V and lambda are
/// plain arithmetic means, matching the algorithm's output line.
struct RunningAverages {
    Matrix q_sum, lam_sum, mu_weighted_sum;
    Vector v_sum;
    long count = 0;
    bool weighted = false;

    static RunningAverages zero(Index n_states, Index n_actions, bool diagnostic) {
        RunningAverages r;
        r.q_sum = Matrix::Zero(n_states, n_actions);
        r.lam_sum = Matrix::Zero(n_states, n_actions);
        r.mu_weighted_sum = Matrix::Zero(n_states, n_actions);
        r.v_sum = Vector::Zero(n_states);
        r.weighted = diagnostic;
        return r;
    }

    void accumulate(const IterateState& st, const Matrix* m_k) {
        q_sum += st.q;
        v_sum += st.v;
        lam_sum += st.lam;
        if (weighted) {
            detail::require(m_k != nullptr, "RunningAverages: missing measure for weighted mu");
            mu_weighted_sum += m_k->cwiseProduct(st.mu);
        }
        ++count;
    }

    Matrix q_bar() const { return q_sum / static_cast<double>(count); }
    Vector v_bar() const { return v_sum / static_cast<double>(count); }
    Matrix lam_bar() const { return lam_sum / static_cast<double>(count); }
    Matrix mu_bar_weighted() const { return mu_weighted_sum / static_cast<double>(count); }

    /// Averaged pair in the layout duality_gap expects.
    PrimalDualPoint averaged_point() const {
        detail::require(weighted, "averaged_point: requires the weighted mu average");
        return {q_bar(), v_bar(), lam_bar(), mu_bar_weighted()};
    }
};

enum class SamplingMode { Trajectory, Iid };

/// Run parameters of one algorithm execution.
struct RunConfig {
    long total_steps = 0;
    StepSchedule step;
    Vector eta;
    double zeta = 0.0;
    std::uint64_t seed = 0;
    std::vector<long> checkpoints; // strictly increasing; may include 0 and T
    bool diagnostic = false;
    SamplingMode sampling = SamplingMode::Trajectory;

    void validate() const {
        detail::require_config(total_steps >= 1, "run config: T must be >= 1");
        detail::require_config(eta.size() > 0 && (eta.array() > 0.0).all(),
                               "run config: eta must be positive");
        detail::require_config(zeta > 0.0, "run config: zeta must be positive");
        for (std::size_t i = 0; i + 1 < checkpoints.size(); ++i)
            detail::require_config(checkpoints[i] < checkpoints[i + 1],
                                   "run config: checkpoints must increase");
    }
};

struct RunResult {
    RunningAverages averages;
    IterateState final_state;
    double max_primal_grad_norm = 0.0;
    double max_dual_grad_norm = 0.0;
};

/// Fixed substream indices of the per-run seed.
namespace streams {
inline constexpr std::uint64_t kInit = 0;
inline constexpr std::uint64_t kEnv = 1;
inline constexpr std::uint64_t kProbe = 2;
inline constexpr std::uint64_t kEval = 3;
} // namespace streams

using CheckpointFn = std::function<void(long step, const RunningAverages&)>;

/// Core loop over a caller-supplied transition stream (the model-free
/// entry point: only sigma, the discount and the run config are needed).
/// `measure_at` supplies M_k for the weighted mu average in diagnostic
/// mode and may be null otherwise.
inline RunResult run_stream(TransitionStream& env_stream, Index n_states, Index n_actions,
                            double sigma, double discount, const RunConfig& cfg,
                            const std::function<Matrix(long)>& measure_at,
                            const CheckpointFn& on_checkpoint = {}) {
    cfg.validate();
    detail::require_config(!cfg.diagnostic || static_cast<bool>(measure_at),
                           "run: diagnostic mode needs a measure source");
    const FeasibleSets sets = FeasibleSets::create(sigma, discount, cfg.eta, cfg.zeta);
    const auto [k1, k2] = gradient_norm_bounds(n_states, n_actions, cfg.eta, sigma, discount, cfg.zeta);

    Rng init_rng = Rng::stream(cfg.seed, streams::kInit);
    Rng probe_rng = Rng::stream(cfg.seed, streams::kProbe);
    IterateState state = random_iterate(n_states, n_actions, sets, init_rng);

    RunResult result;
    result.averages = RunningAverages::zero(n_states, n_actions, cfg.diagnostic);

    Matrix measure_cache;
    std::size_t next_checkpoint = 0;
    const auto emit = [&](long k) {
        if (!on_checkpoint) return;
        while (next_checkpoint < cfg.checkpoints.size() && cfg.checkpoints[next_checkpoint] == k) {
            if (result.averages.count == 0) {
                // Initial checkpoint: report the starting iterate itself.
                RunningAverages initial = RunningAverages::zero(n_states, n_actions, cfg.diagnostic);
                initial.accumulate(state, cfg.diagnostic ? &measure_cache : nullptr);
                on_checkpoint(k, initial);
            } else {
                on_checkpoint(k, result.averages);
            }
            ++next_checkpoint;
        }
    };

    for (long k = 0; k < cfg.total_steps; ++k) {
        if (cfg.diagnostic) measure_cache = measure_at(k);
        emit(k);
        result.averages.accumulate(state, cfg.diagnostic ? &measure_cache : nullptr);

        const auto sample = env_stream.next();
        detail::require_config(sample.has_value(), "run: transition stream exhausted before T");
        detail::internal_check(sample->reward >= 0.0 && sample->reward <= sigma,
                               "run: observed reward outside [0, sigma]");
        const UniformSample probe{probe_rng.uniform_index(static_cast<int>(n_states)),
                                  probe_rng.uniform_index(static_cast<int>(n_actions))};
        const double gamma = cfg.step.at(k);
        const StepGradients g = spdq_step(state, *sample, probe, gamma, discount, sets);

        detail::internal_check(g.primal_norm <= k1 * (1.0 + 1e-12) && g.dual_norm <= k2 * (1.0 + 1e-12),
                               "run: stochastic gradient norm exceeded its certified bound");
        result.max_primal_grad_norm = std::max(result.max_primal_grad_norm, g.primal_norm);
        result.max_dual_grad_norm = std::max(result.max_dual_grad_norm, g.dual_norm);
#ifndef NDEBUG
        state.validate(sets);
#endif
    }
    state.validate(sets);
    emit(cfg.total_steps);
    result.final_state = std::move(state);
    return result;
}

/// Diagnostic / model-backed entry point: builds the sample stream from
/// the model and schedule according to the configured sampling mode.
inline RunResult run(const MdpModel& model, DistributionSchedule& schedule, const RunConfig& cfg,
                     const CheckpointFn& on_checkpoint = {}) {
    std::unique_ptr<TransitionStream> stream;
    Rng env_rng = Rng::stream(cfg.seed, streams::kEnv);
    if (cfg.sampling == SamplingMode::Trajectory)
        stream = std::make_unique<TrajectoryStream>(model, schedule.behavior(),
                                                    schedule.initial_distribution(), env_rng);
    else
        stream = std::make_unique<IidScheduleStream>(model, schedule, env_rng);
    const std::function<Matrix(long)> measure_at =
        cfg.diagnostic ? std::function<Matrix(long)>([&schedule](long k) { return schedule.m_matrix_at(k); })
                       : std::function<Matrix(long)>();
    return run_stream(*stream, model.n_states, model.n_actions, model.sigma, model.discount, cfg,
                      measure_at, on_checkpoint);
}

} // namespace spdq
