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
//
// Test-only reference implementations. Everything here is deliberately
// written with plain scalar loops (no shared code with the library) so it
// can serve as an independent oracle.

#pragma once

#include "spdq/oracle.hpp"
#include "spdq/spdq.hpp"

#include <cmath>
#include <complex>
#include <vector>

namespace spdq::test {

// ---------------------------------------------------------------------------
// Random problem generators

inline MdpModel random_mdp(Index n_states, Index n_actions, double discount, Rng& rng,
                           bool uniform_rewards = false) {
    MdpModel model;
    model.n_states = n_states;
    model.n_actions = n_actions;
    model.discount = discount;
    model.sigma = 1.0;
    for (Index a = 0; a < n_actions; ++a) {
        Matrix p(n_states, n_states);
        for (Index s = 0; s < n_states; ++s) {
            double total = 0.0;
            for (Index t = 0; t < n_states; ++t) {
                p(s, t) = -std::log(1.0 - rng.uniform()); // exponential weights
                total += p(s, t);
            }
            p.row(s) /= total;
        }
        model.transitions.push_back(std::move(p));
    }
    Matrix lo(n_states, n_actions), hi(n_states, n_actions);
    for (Index s = 0; s < n_states; ++s)
        for (Index a = 0; a < n_actions; ++a) {
            const double x = rng.uniform();
            const double y = rng.uniform();
            lo(s, a) = std::min(x, y);
            hi(s, a) = std::max(x, y);
        }
    model.rewards = uniform_rewards ? RewardModel::uniform_interval(lo, hi)
                                    : RewardModel::deterministic(0.5 * (lo + hi));
    model.validate();
    return model;
}

inline StochasticPolicy random_exploring_policy(Index n_states, Index n_actions, Rng& rng) {
    Matrix probs(n_states, n_actions);
    for (Index s = 0; s < n_states; ++s) {
        double total = 0.0;
        for (Index a = 0; a < n_actions; ++a) {
            probs(s, a) = 0.05 + rng.uniform();
            total += probs(s, a);
        }
        probs.row(s) /= total;
    }
    return {probs};
}

inline Vector random_distribution(Index n, Rng& rng) {
    Vector v(n);
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        v(i) = 0.05 + rng.uniform();
        total += v(i);
    }
    return v / total;
}

/// Random point inside the feasible sets (lambda rows re-projected onto
/// the sum floor through plain rescaling, not the library projection).
inline PrimalDualPoint random_feasible_point(const MdpModel& model, const FeasibleSets& sets, Rng& rng) {
    PrimalDualPoint p;
    p.q.resize(model.n_states, model.n_actions);
    p.lam.resize(model.n_states, model.n_actions);
    p.mu.resize(model.n_states, model.n_actions);
    p.v.resize(model.n_states);
    for (Index s = 0; s < model.n_states; ++s) {
        p.v(s) = rng.uniform(0.0, sets.v_cap);
        for (Index a = 0; a < model.n_actions; ++a) {
            p.q(s, a) = rng.uniform(0.0, sets.v_cap);
            p.lam(s, a) = rng.uniform(0.0, sets.lambda_cap);
            p.mu(s, a) = rng.uniform(0.0, sets.mu_cap);
        }
        // Scale the row up if the sum floor is violated; keeps the box
        // because eta(s) <= |A| * cap for nonempty sets.
        const double row_sum = p.lam.row(s).sum();
        if (row_sum < sets.eta(s)) {
            if (row_sum <= 0.0)
                p.lam.row(s).setConstant(sets.eta(s) / static_cast<double>(model.n_actions));
            else
                p.lam.row(s) *= sets.eta(s) / row_sum;
        }
        for (Index a = 0; a < model.n_actions; ++a)
            p.lam(s, a) = std::min(p.lam(s, a), sets.lambda_cap);
        if (p.lam.row(s).sum() < sets.eta(s))
            p.lam.row(s).setConstant(sets.eta(s) / static_cast<double>(model.n_actions));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Exact solvers (oracles)

/// Gaussian elimination with partial pivoting on plain arrays; solves
/// A x = b without any Eigen machinery.
inline std::vector<double> scalar_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t r = n; r-- > 0;) {
        double acc = b[r];
        for (std::size_t c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
        x[r] = acc / a[r][r];
    }
    return x;
}

/// Exact value of a deterministic policy via scalar Gaussian elimination.
inline std::vector<double> scalar_policy_value(const MdpModel& model, const std::vector<Index>& pi) {
    const std::size_t n = static_cast<std::size_t>(model.n_states);
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    std::vector<double> b(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const Index act = pi[s];
        for (std::size_t t = 0; t < n; ++t)
            a[s][t] = (s == t ? 1.0 : 0.0) -
                      model.discount * model.transitions[static_cast<std::size_t>(act)](
                                           static_cast<Index>(s), static_cast<Index>(t));
        b[s] = model.expected_reward(static_cast<Index>(s), act);
    }
    return scalar_solve(std::move(a), std::move(b));
}

/// Brute force: enumerate all |A|^|S| deterministic policies, evaluate
/// each exactly, and take the element-wise maximum.
struct BruteForceSolution {
    Vector v_star;
    DeterministicPolicy pi_star;
};

inline BruteForceSolution brute_force_solve(const MdpModel& model) {
    const Index n = model.n_states;
    std::vector<Index> pi(static_cast<std::size_t>(n), 0);
    Vector best = Vector::Constant(n, -1.0);
    std::vector<Index> best_pi = pi;
    double best_sum = -std::numeric_limits<double>::infinity();
    while (true) {
        const std::vector<double> value = scalar_policy_value(model, pi);
        for (Index s = 0; s < n; ++s)
            if (value[static_cast<std::size_t>(s)] > best(s)) best(s) = value[static_cast<std::size_t>(s)];
        // A policy optimal at every state simultaneously exists; remember
        // the first policy attaining the maximal value sum.
        double sum = 0.0;
        for (double x : value) sum += x;
        if (sum > best_sum) {
            best_sum = sum;
            best_pi = pi;
        }
        Index pos = 0;
        while (pos < n) {
            if (++pi[static_cast<std::size_t>(pos)] < model.n_actions) break;
            pi[static_cast<std::size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == n) break;
    }
    return {best, DeterministicPolicy{best_pi}};
}

/// Monte Carlo policy value: discounted rollouts truncated where the
/// discount tail drops below 1e-10. Returns (mean, standard error).
inline std::pair<double, double> mc_policy_value(const MdpModel& model, const StochasticPolicy& policy,
                                                 Index start, long rollouts, Rng& rng) {
    const long horizon =
        model.discount == 0.0
            ? 1
            : static_cast<long>(std::ceil(std::log(1e-10) / std::log(model.discount)));
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < rollouts; ++i) {
        double ret = 0.0, weight = 1.0;
        Index s = start;
        for (long t = 0; t < horizon; ++t) {
            const Index a = rng.categorical(policy.probs.row(s).transpose());
            const auto [next, reward] = sample_step(model, s, a, rng);
            ret += weight * reward;
            weight *= model.discount;
            s = next;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    const double mean = sum / static_cast<double>(rollouts);
    const double var = std::max(0.0, sum_sq / static_cast<double>(rollouts) - mean * mean);
    return {mean, std::sqrt(var / static_cast<double>(rollouts))};
}

/// Term-by-term scalar evaluation of the measure-scaled Lagrangian; no
/// matrix operations.
inline double scalar_lagrangian(const PrimalDualPoint& p, const MdpModel& model, const Vector& eta,
                                const Matrix& m) {
    double value = 0.0;
    for (Index s = 0; s < model.n_states; ++s) value += eta(s) * p.v(s);
    for (Index a = 0; a < model.n_actions; ++a)
        for (Index s = 0; s < model.n_states; ++s) {
            double constraint = model.expected_reward(s, a) - p.q(s, a);
            for (Index t = 0; t < model.n_states; ++t)
                constraint += model.discount * model.transitions[static_cast<std::size_t>(a)](s, t) * p.v(t);
            value += p.mu(s, a) * m(s, a) * constraint;
            value += p.lam(s, a) * (p.q(s, a) - p.v(s));
        }
    return value;
}

// ---------------------------------------------------------------------------
// Projection oracle

/// Grid search for the projection onto {0 <= x <= cap, sum x >= eta}:
/// if the clamp is infeasible the minimizer lies on the plane sum = eta,
/// which is scanned at the given resolution.
inline Vector grid_project_lambda(const Vector& z, double eta, double cap, double resolution) {
    const Index n = z.size();
    Vector clamped = z.array().max(0.0).min(cap).matrix();
    if (clamped.sum() >= eta) return clamped;

    const auto dist_sq = [&](const Vector& x) { return (x - z).squaredNorm(); };
    Vector best;
    double best_dist = std::numeric_limits<double>::infinity();
    const long steps = static_cast<long>(std::floor(cap / resolution));
    if (n == 2) {
        for (long i = 0; i <= steps; ++i) {
            const double x0 = static_cast<double>(i) * resolution;
            const double x1 = eta - x0;
            if (x1 < -1e-12 || x1 > cap + 1e-12) continue;
            Vector x(2);
            x << x0, std::clamp(x1, 0.0, cap);
            if (dist_sq(x) < best_dist) {
                best_dist = dist_sq(x);
                best = x;
            }
        }
    } else if (n == 3) {
        for (long i = 0; i <= steps; ++i)
            for (long j = 0; j <= steps; ++j) {
                const double x0 = static_cast<double>(i) * resolution;
                const double x1 = static_cast<double>(j) * resolution;
                const double x2 = eta - x0 - x1;
                if (x2 < -1e-12 || x2 > cap + 1e-12) continue;
                Vector x(3);
                x << x0, x1, std::clamp(x2, 0.0, cap);
                if (dist_sq(x) < best_dist) {
                    best_dist = dist_sq(x);
                    best = x;
                }
            }
    } else {
        throw std::logic_error("grid_project_lambda: only |A| <= 3 supported");
    }
    return best;
}

// ---------------------------------------------------------------------------
// Eigenvalue oracle

/// Characteristic polynomial coefficients by the Faddeev-LeVerrier
/// recurrence, then all roots by Durand-Kerner iteration; returns the
/// second-largest root modulus of a row-stochastic matrix.
inline double charpoly_second_modulus(const Matrix& p) {
    const Index n = p.rows();
    // c[0] x^n + c[1] x^{n-1} + ... + c[n]; c[0] = 1.
    std::vector<double> coeff(static_cast<std::size_t>(n) + 1, 0.0);
    coeff[0] = 1.0;
    Matrix m = Matrix::Zero(n, n);
    for (Index k = 1; k <= n; ++k) {
        m = p * m + coeff[static_cast<std::size_t>(k - 1)] * Matrix::Identity(n, n);
        coeff[static_cast<std::size_t>(k)] = -(p * m).trace() / static_cast<double>(k);
    }

    std::vector<std::complex<double>> roots(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        roots[static_cast<std::size_t>(i)] =
            std::polar(0.9, 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n) + 0.35);
    const auto eval = [&](std::complex<double> x) {
        std::complex<double> acc = 0.0;
        for (double c : coeff) acc = acc * x + c;
        return acc;
    };
    for (int iter = 0; iter < 2000; ++iter) {
        double shift = 0.0;
        for (std::size_t i = 0; i < roots.size(); ++i) {
            std::complex<double> denom = 1.0;
            for (std::size_t j = 0; j < roots.size(); ++j)
                if (j != i) denom *= roots[i] - roots[j];
            const std::complex<double> delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            shift = std::max(shift, std::abs(delta));
        }
        if (shift < 1e-13) break;
    }
    double largest = 0.0, second = 0.0;
    for (const auto& r : roots) {
        const double mod = std::abs(r);
        if (mod > largest) {
            second = largest;
            largest = mod;
        } else if (mod > second) {
            second = mod;
        }
    }
    return second;
}

// ---------------------------------------------------------------------------
// Exhaustive expected update (unbiasedness oracle)

struct ExpectedUpdate {
    Matrix q;
    Vector v;
    Matrix lam;
    Matrix mu;
};

/// Expectation of the pre-projection stochastic update over the exhaustive
/// joint law: (s, a) ~ measure, s' ~ P_a(s, .), expected rewards, and the
/// independent uniform probe. Every branch applies the real update
/// function to a copy of the state.
inline ExpectedUpdate exhaustive_expected_update(const IterateState& state, const MdpModel& model,
                                                 const Matrix& measure, const Vector& eta, double gamma) {
    ExpectedUpdate expect{Matrix::Zero(model.n_states, model.n_actions), Vector::Zero(model.n_states),
                          Matrix::Zero(model.n_states, model.n_actions),
                          Matrix::Zero(model.n_states, model.n_actions)};
    const double probe_weight = 1.0 / static_cast<double>(model.n_states * model.n_actions);
    for (Index s = 0; s < model.n_states; ++s)
        for (Index a = 0; a < model.n_actions; ++a) {
            if (measure(s, a) == 0.0) continue;
            for (Index s2 = 0; s2 < model.n_states; ++s2) {
                const double p_trans = model.transitions[static_cast<std::size_t>(a)](s, s2);
                if (p_trans == 0.0) continue;
                for (Index su = 0; su < model.n_states; ++su)
                    for (Index au = 0; au < model.n_actions; ++au) {
                        const double weight = measure(s, a) * p_trans * probe_weight;
                        IterateState branch = state;
                        spdq_update_unprojected(branch,
                                                EnvSample{s, a, s2, model.rewards.expected(s, a, s2)},
                                                UniformSample{su, au}, gamma, model.discount, eta);
                        expect.q += weight * (branch.q - state.q);
                        expect.v += weight * (branch.v - state.v);
                        expect.lam += weight * (branch.lam - state.lam);
                        expect.mu += weight * (branch.mu - state.mu);
                    }
            }
        }
    return expect;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Central finite differences of the measure-scaled Lagrangian in every
/// coordinate block.
inline LagrangianGradients finite_difference_gradients(const PrimalDualPoint& point,
                                                       const SaddleProblem& problem, const Matrix& m,
                                                       double h = 1e-5) {
    LagrangianGradients g;
    const auto central = [&](PrimalDualPoint& p, double& coord) {
        const double saved = coord;
        coord = saved + h;
        const double up = lagrangian_M(p, problem, m);
        coord = saved - h;
        const double down = lagrangian_M(p, problem, m);
        coord = saved;
        return (up - down) / (2.0 * h);
    };
    PrimalDualPoint p = point;
    g.q.resize(p.q.rows(), p.q.cols());
    g.lam.resize(p.q.rows(), p.q.cols());
    g.mu.resize(p.q.rows(), p.q.cols());
    g.v.resize(p.v.size());
    for (Index s = 0; s < p.q.rows(); ++s)
        for (Index a = 0; a < p.q.cols(); ++a) {
            g.q(s, a) = central(p, p.q(s, a));
            g.lam(s, a) = central(p, p.lam(s, a));
            g.mu(s, a) = central(p, p.mu(s, a));
        }
    for (Index s = 0; s < p.v.size(); ++s) g.v(s) = central(p, p.v(s));
    return g;
}

} // namespace spdq::test
