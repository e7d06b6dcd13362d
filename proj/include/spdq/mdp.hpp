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

#include "spdq/rng.hpp"
#include "spdq/types.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace spdq {

inline constexpr double kRowSumTol = 1e-12;

/// Reward distribution per (state, action) pair. Two kinds are supported:
/// deterministic values and uniform draws from per-pair intervals. Rewards
/// do not depend on the successor state by default; an optional per-action
/// (state, next_state) table of deterministic values covers the general
/// three-index case.
class RewardModel {
  public:
    enum class Kind { Deterministic, UniformInterval };

    static RewardModel deterministic(Matrix values) {
        RewardModel r;
        r.kind_ = Kind::Deterministic;
        r.lo_ = values;
        r.hi_ = std::move(values);
        return r;
    }

    static RewardModel uniform_interval(Matrix lo, Matrix hi) {
        detail::require(lo.rows() == hi.rows() && lo.cols() == hi.cols(),
                        "uniform_interval: lo/hi shape mismatch");
        detail::require((lo.array() <= hi.array()).all(),
                        "uniform_interval: lo must be <= hi");
        RewardModel r;
        r.kind_ = Kind::UniformInterval;
        r.lo_ = std::move(lo);
        r.hi_ = std::move(hi);
        return r;
    }

    /// Deterministic rewards keyed on (state, action, next_state);
    /// `values[a]` is a (n_states x n_states) table.
    static RewardModel deterministic_by_next_state(std::vector<Matrix> values) {
        detail::require(!values.empty(), "by_next_state: empty table");
        RewardModel r;
        r.kind_ = Kind::Deterministic;
        const Index n = values.front().rows();
        r.lo_ = Matrix::Zero(n, static_cast<Index>(values.size()));
        r.hi_ = r.lo_;
        r.by_next_ = std::move(values);
        return r;
    }

    Kind kind() const { return kind_; }
    bool depends_on_next_state() const { return by_next_.has_value(); }

    double expected(Index s, Index a) const {
        return 0.5 * (lo_(s, a) + hi_(s, a));
    }

    double expected(Index s, Index a, Index next) const {
        if (by_next_) return (*by_next_)[static_cast<std::size_t>(a)](s, next);
        return expected(s, a);
    }

    double sample(Index s, Index a, Index next, Rng& rng) const {
        if (by_next_) return (*by_next_)[static_cast<std::size_t>(a)](s, next);
        if (kind_ == Kind::Deterministic) return lo_(s, a);
        return rng.uniform(lo_(s, a), hi_(s, a));
    }

    /// Largest value the model can emit; used to validate against sigma.
    double max_value() const {
        double m = hi_.size() > 0 ? hi_.maxCoeff() : 0.0;
        if (by_next_)
            for (const Matrix& t : *by_next_) m = std::max(m, t.maxCoeff());
        return m;
    }

    double min_value() const {
        double m = lo_.size() > 0 ? lo_.minCoeff() : 0.0;
        if (by_next_)
            for (const Matrix& t : *by_next_) m = std::min(m, t.minCoeff());
        return m;
    }

  private:
    Kind kind_ = Kind::Deterministic;
    Matrix lo_, hi_; // (state, action) bounds; equal when deterministic
    std::optional<std::vector<Matrix>> by_next_;
};

/// Finite discounted MDP: per-action transition matrices, a reward model,
/// a discount in [0, 1) and the reward upper bound sigma (>= 1). Immutable
/// after construction; safe to share read-only across threads.
struct MdpModel {
    Index n_states = 0;
    Index n_actions = 0;
    std::vector<Matrix> transitions; // transitions[a](s, s')
    RewardModel rewards = RewardModel::deterministic(Matrix::Zero(0, 0));
    double discount = 0.0;
    double sigma = 1.0;

    void validate() const {
        detail::require(n_states > 0 && n_actions > 0, "model: empty state/action space");
        detail::require(discount >= 0.0 && discount < 1.0, "model: discount must be in [0,1)");
        detail::require(sigma >= 1.0, "model: sigma must be >= 1");
        detail::require(static_cast<Index>(transitions.size()) == n_actions,
                        "model: one transition matrix per action required");
        for (const Matrix& p : transitions) {
            detail::require(p.rows() == n_states && p.cols() == n_states,
                            "model: transition matrix shape mismatch");
            detail::require((p.array() >= 0.0).all(), "model: negative transition probability");
            for (Index s = 0; s < n_states; ++s)
                detail::require(std::abs(p.row(s).sum() - 1.0) <= kRowSumTol,
                                "model: transition row does not sum to 1");
        }
        detail::require(rewards.min_value() >= 0.0 && rewards.max_value() <= sigma,
                        "model: rewards must lie in [0, sigma]");
        for (Index a = 0; a < n_actions; ++a)
            for (Index s = 0; s < n_states; ++s) {
                const double r = expected_reward(s, a);
                detail::require(r >= 0.0 && r <= sigma, "model: expected reward outside [0, sigma]");
            }
    }

    /// E[r | s, a] marginalized over the successor state.
    double expected_reward(Index s, Index a) const {
        if (!rewards.depends_on_next_state()) return rewards.expected(s, a);
        double r = 0.0;
        for (Index next = 0; next < n_states; ++next)
            r += transitions[static_cast<std::size_t>(a)](s, next) * rewards.expected(s, a, next);
        return r;
    }

    /// Expected reward vector of one action over all states.
    Vector expected_reward_vector(Index a) const {
        Vector r(n_states);
        for (Index s = 0; s < n_states; ++s) r(s) = expected_reward(s, a);
        return r;
    }

    /// All action reward vectors stacked action-major into R^{|S||A|}.
    Vector stacked_rewards() const {
        Vector r(n_states * n_actions);
        for (Index a = 0; a < n_actions; ++a) r.segment(a * n_states, n_states) = expected_reward_vector(a);
        return r;
    }
};

/// Deterministic policy: one action per state.
struct DeterministicPolicy {
    std::vector<Index> action_of;

    Index operator()(Index s) const { return action_of[static_cast<std::size_t>(s)]; }
    Index size() const { return static_cast<Index>(action_of.size()); }

    bool operator==(const DeterministicPolicy& other) const = default;
};

/// Stochastic policy: per-state distribution over actions (rows on the
/// unit simplex). A deterministic policy embeds as basis-vector rows.
struct StochasticPolicy {
    Matrix probs; // (state, action)

    Index n_states() const { return probs.rows(); }
    Index n_actions() const { return probs.cols(); }

    static StochasticPolicy uniform(Index n_states, Index n_actions) {
        return {Matrix::Constant(n_states, n_actions, 1.0 / static_cast<double>(n_actions))};
    }

    static StochasticPolicy from_deterministic(const DeterministicPolicy& pi, Index n_actions) {
        Matrix p = Matrix::Zero(pi.size(), n_actions);
        for (Index s = 0; s < pi.size(); ++s) p(s, pi(s)) = 1.0;
        return {std::move(p)};
    }

    void validate() const {
        detail::require((probs.array() >= 0.0).all(), "policy: negative probability");
        for (Index s = 0; s < probs.rows(); ++s)
            detail::require(std::abs(probs.row(s).sum() - 1.0) <= kRowSumTol,
                            "policy: row off the simplex");
    }
};

/// Greedy deterministic policy from a (state, action) value table; ties
/// break toward the lowest action index.
inline DeterministicPolicy greedy_policy(const Matrix& values) {
    DeterministicPolicy pi;
    pi.action_of.resize(static_cast<std::size_t>(values.rows()));
    for (Index s = 0; s < values.rows(); ++s) {
        Index best = 0;
        for (Index a = 1; a < values.cols(); ++a)
            if (values(s, a) > values(s, best)) best = a;
        pi.action_of[static_cast<std::size_t>(s)] = best;
    }
    return pi;
}

/// Stochastic policy from a nonnegative (state, action) weight table by
/// row normalization. Rows must have strictly positive sums.
inline StochasticPolicy row_normalized_policy(const Matrix& weights) {
    Matrix p = weights;
    for (Index s = 0; s < p.rows(); ++s) {
        const double total = p.row(s).sum();
        detail::require(total > 0.0, "row_normalized_policy: zero row weight");
        p.row(s) /= total;
    }
    return {std::move(p)};
}

/// State-to-state transition matrix induced by a stochastic policy:
/// P(s, s') = sum_a policy(s, a) * P_a(s, s').
inline Matrix transition_matrix_under_policy(const MdpModel& model, const StochasticPolicy& policy) {
    detail::require(policy.n_states() == model.n_states && policy.n_actions() == model.n_actions,
                    "transition_matrix_under_policy: dimension mismatch");
    Matrix p = Matrix::Zero(model.n_states, model.n_states);
    for (Index a = 0; a < model.n_actions; ++a)
        p += policy.probs.col(a).asDiagonal() * model.transitions[static_cast<std::size_t>(a)];
    return p;
}

/// Expected one-step reward per state under a stochastic policy.
inline Vector expected_reward_under_policy(const MdpModel& model, const StochasticPolicy& policy) {
    detail::require(policy.n_states() == model.n_states && policy.n_actions() == model.n_actions,
                    "expected_reward_under_policy: dimension mismatch");
    Vector r = Vector::Zero(model.n_states);
    for (Index a = 0; a < model.n_actions; ++a)
        r += policy.probs.col(a).cwiseProduct(model.expected_reward_vector(a));
    return r;
}

/// Exact policy evaluation: solves (I - discount * P_pi) V = R_pi with a
/// dense partial-pivot LU factorization. Entries lie in [0, sigma/(1-a)].
inline Vector evaluate_policy(const MdpModel& model, const StochasticPolicy& policy) {
    const Matrix p = transition_matrix_under_policy(model, policy);
    const Vector r = expected_reward_under_policy(model, policy);
    Matrix system = Matrix::Identity(model.n_states, model.n_states) - model.discount * p;
    Eigen::PartialPivLU<Matrix> lu(system);
    const Vector v = lu.solve(r);
    const double residual = (system * v - r).lpNorm<Eigen::Infinity>();
    detail::internal_check(residual <= 1e-9 * (1.0 + r.lpNorm<Eigen::Infinity>()),
                           "evaluate_policy: linear solve failed");
    return v;
}

inline Vector evaluate_policy(const MdpModel& model, const DeterministicPolicy& policy) {
    return evaluate_policy(model, StochasticPolicy::from_deterministic(policy, model.n_actions));
}

/// One environment transition: draw the successor state from P_a(s, .) and
/// a reward from the reward model at (s, a, s').
inline std::pair<Index, double> sample_step(const MdpModel& model, Index state, Index action, Rng& rng) {
    detail::require(state >= 0 && state < model.n_states, "sample_step: state out of range");
    detail::require(action >= 0 && action < model.n_actions, "sample_step: action out of range");
    const Index next = rng.categorical(model.transitions[static_cast<std::size_t>(action)].row(state).transpose());
    const double reward = model.rewards.sample(state, action, next, rng);
    return {next, reward};
}

/// Rectangular grid world. States are cells, indexed s = y * width + x
/// with y = 0 the bottom row; start at the bottom-left cell, goal at the
/// top-right. Actions {up, down, left, right} move deterministically;
/// moves off the boundary leave the state unchanged. Rewards are uniform
/// draws: `step` interval everywhere except at the goal cell, where the
/// `goal` interval applies to every action taken there.
enum class GridAction : Index { Up = 0, Down = 1, Left = 2, Right = 3 };

inline MdpModel grid_world(Index width, Index height, std::pair<double, double> step_reward_interval,
                           std::pair<double, double> goal_reward_interval, double discount) {
    detail::require(width >= 1 && height >= 1, "grid_world: degenerate grid");
    const auto check_interval = [](std::pair<double, double> iv, const char* name) {
        detail::require(iv.first >= 0.0 && iv.first <= iv.second,
                        std::string("grid_world: invalid ") + name + " interval");
    };
    check_interval(step_reward_interval, "step");
    check_interval(goal_reward_interval, "goal");

    MdpModel model;
    model.n_states = width * height;
    model.n_actions = 4;
    model.discount = discount;
    model.sigma = std::max({1.0, step_reward_interval.second, goal_reward_interval.second});

    const Index goal = model.n_states - 1;
    model.transitions.assign(4, Matrix::Zero(model.n_states, model.n_states));
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
            const Index s = y * width + x;
            const auto move = [&](GridAction a, Index nx, Index ny) {
                const bool inside = nx >= 0 && nx < width && ny >= 0 && ny < height;
                const Index target = inside ? ny * width + nx : s;
                model.transitions[static_cast<std::size_t>(a)](s, target) = 1.0;
            };
            move(GridAction::Up, x, y + 1);
            move(GridAction::Down, x, y - 1);
            move(GridAction::Left, x - 1, y);
            move(GridAction::Right, x + 1, y);
        }

    Matrix lo = Matrix::Constant(model.n_states, 4, step_reward_interval.first);
    Matrix hi = Matrix::Constant(model.n_states, 4, step_reward_interval.second);
    lo.row(goal).setConstant(goal_reward_interval.first);
    hi.row(goal).setConstant(goal_reward_interval.second);
    model.rewards = RewardModel::uniform_interval(std::move(lo), std::move(hi));
    model.validate();
    return model;
}

} // namespace spdq
