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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spdq/instances.hpp"
#include "spdq/schedule.hpp"
#include "support.hpp"

using namespace spdq;

namespace {

DistributionSchedule two_state_schedule() {
    static const MdpModel model = two_state_mdp();
    return DistributionSchedule(model, two_state_behavior(), two_state_initial_distribution());
}

} // namespace

TEST_CASE("state distribution starts at v0 and converges to the stationary law") {
    DistributionSchedule sched = two_state_schedule();
    const Vector v0 = sched.state_distribution_at(0);
    CHECK(v0(0) == 0.4);
    CHECK(v0(1) == 0.6);
    const Vector v_limit = sched.state_distribution_at(2000);
    CHECK(std::abs(v_limit(0) - 0.4286) <= 1e-4);
    CHECK(std::abs(v_limit(1) - 0.5714) <= 1e-4);
    CHECK(std::abs(sched.stationary()(0) - 0.4286) <= 1e-4);
}

TEST_CASE("memoized distribution matches from-scratch powers, including rewinds") {
    Rng rng(3);
    const MdpModel model = test::random_mdp(4, 3, 0.8, rng);
    const StochasticPolicy behavior = test::random_exploring_policy(4, 3, rng);
    const Vector v0 = test::random_distribution(4, rng);
    DistributionSchedule sched(model, behavior, v0);

    const Matrix p = sched.p_theta();
    for (long k : {17L, 5L, 40L, 0L, 23L}) {
        Vector expected = v0;
        for (long i = 0; i < k; ++i) expected = p.transpose() * expected;
        CHECK((sched.state_distribution_at(k) - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("m matrix at the stationary limit matches the benchmark blocks") {
    DistributionSchedule sched = two_state_schedule();
    const Matrix m_inf = sched.m_infinity();
    // Block of action 1: diag(0.0857, 0.4000); action 2: diag(0.3429, 0.1714).
    CHECK(std::abs(m_inf(0, 0) - 0.0857) <= 1e-4);
    CHECK(std::abs(m_inf(1, 0) - 0.4000) <= 1e-4);
    CHECK(std::abs(m_inf(0, 1) - 0.3429) <= 1e-4);
    CHECK(std::abs(m_inf(1, 1) - 0.1714) <= 1e-4);
    const Matrix m_far = sched.m_matrix_at(5000);
    CHECK((m_far - m_inf).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("uniform stationary behavior gives the flat state-action measure") {
    const MdpModel model = grid_world_mdp(2, 2);
    const StochasticPolicy uniform = StochasticPolicy::uniform(4, 4);
    DistributionSchedule sched(model, uniform, Vector::Constant(4, 0.25));
    const Matrix m = sched.m_matrix_at(7);
    CHECK((m.array() - 1.0 / 16.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("m matrix entries sum to one at every step") {
    Rng rng(9);
    const MdpModel model = test::random_mdp(5, 2, 0.8, rng);
    DistributionSchedule sched(model, test::random_exploring_policy(5, 2, rng),
                               test::random_distribution(5, rng));
    for (long k : {0L, 1L, 3L, 10L, 100L}) CHECK(std::abs(sched.m_matrix_at(k).sum() - 1.0) <= 1e-12);
}

TEST_CASE("zeta estimate reproduces the benchmark floor") {
    DistributionSchedule sched = two_state_schedule();
    CHECK(std::abs(sched.zeta() - 0.0856) <= 1e-3);
    CHECK(std::abs(sched.estimate_zeta(1000) - 0.0856) <= 1e-3);
}

TEST_CASE("zeta with a stationary start is the minimal stationary entry") {
    const MdpModel model = two_state_mdp();
    DistributionSchedule stationary(model, two_state_behavior(),
                                    DistributionSchedule(model, two_state_behavior(),
                                                         two_state_initial_distribution())
                                        .stationary());
    CHECK(std::abs(stationary.zeta() - stationary.m_infinity().minCoeff()) <= 1e-12);
}

TEST_CASE("zeta horizon is sufficient against a ten-fold longer sweep") {
    Rng rng(21);
    const MdpModel model = test::random_mdp(4, 2, 0.9, rng);
    DistributionSchedule sched(model, test::random_exploring_policy(4, 2, rng),
                               test::random_distribution(4, rng));
    const long horizon = sched.default_mixing_horizon();
    CHECK(std::abs(sched.estimate_zeta(horizon) - sched.estimate_zeta(10 * horizon)) <= 1e-12);
}

TEST_CASE("schedule invariant: measure entries dominate zeta beyond the first step") {
    DistributionSchedule sched = two_state_schedule();
    for (long k = 1; k <= 500; ++k) CHECK(sched.m_matrix_at(k).minCoeff() >= sched.zeta() - 1e-12);
}

TEST_CASE("beta is zero for a stationary start") {
    const MdpModel model = two_state_mdp();
    DistributionSchedule base = two_state_schedule();
    DistributionSchedule stationary(model, two_state_behavior(), base.stationary());
    for (long k : {0L, 1L, 10L}) CHECK(stationary.beta_at(k) <= 1e-13);
}

TEST_CASE("beta at step zero matches the hand computation") {
    DistributionSchedule sched = two_state_schedule();
    // v1 = P_theta^T v0 = [0.428, 0.572]; max |v1 - v0| = 0.028.
    const double zeta = sched.zeta();
    CHECK(std::abs(sched.beta_at(0) - 0.028 / (zeta * zeta)) <= 1e-9);
}

TEST_CASE("beta dominates the inverse-measure drift norm") {
    Rng rng(31);
    const MdpModel model = test::random_mdp(4, 3, 0.85, rng);
    const StochasticPolicy behavior = test::random_exploring_policy(4, 3, rng);
    const Vector v0 = test::random_distribution(4, rng);
    // Use the exact floor including step zero so the domination argument
    // applies from k = 0 on.
    DistributionSchedule probe(model, behavior, v0);
    double zeta_full = probe.m_matrix_at(0).minCoeff();
    for (long k = 1; k <= 10 * probe.default_mixing_horizon(); ++k)
        zeta_full = std::min(zeta_full, probe.m_matrix_at(k).minCoeff());
    DistributionSchedule sched(model, behavior, v0, zeta_full);
    for (long k = 0; k <= 100; ++k) sched.beta_at(k, /*check=*/true); // throws on violation
}

TEST_CASE("second eigenvalue of the benchmark chain is 0.02") {
    DistributionSchedule sched = two_state_schedule();
    // 2x2 closed form: eigenvalues are 1 and trace - 1.
    CHECK(std::abs(second_eigenvalue_modulus(sched.p_theta()) - 0.02) <= 1e-8);
}

TEST_CASE("rank-one chains have a vanishing second eigenvalue") {
    Matrix p(3, 3);
    p.row(0) << 0.2, 0.5, 0.3;
    p.row(1) = p.row(0);
    p.row(2) = p.row(0);
    CHECK(second_eigenvalue_modulus(p) <= 1e-12);
}

TEST_CASE("second eigenvalue matches the characteristic-polynomial oracle") {
    Rng rng(47);
    for (int trial = 0; trial < 12; ++trial) {
        const MdpModel model = test::random_mdp(5, 2, 0.8, rng);
        const StochasticPolicy behavior = test::random_exploring_policy(5, 2, rng);
        const Matrix p = transition_matrix_under_policy(model, behavior);
        const double via_power = second_eigenvalue_modulus(p);
        const double via_roots = test::charpoly_second_modulus(p);
        CHECK(std::abs(via_power - via_roots) <= 1e-6);
    }
}

TEST_CASE("mixing threshold formula") {
    CHECK(mixing_threshold_kstar(std::exp(-1.0)) == 0);
    CHECK(mixing_threshold_kstar(0.02) == 0);
    CHECK(mixing_threshold_kstar(0.9) == 162);
    CHECK_THROWS_AS(mixing_threshold_kstar(1.0), std::invalid_argument);
    CHECK_THROWS_AS(mixing_threshold_kstar(0.0), std::invalid_argument);
}

TEST_CASE("mixing threshold certifies the harmonic decay of the power") {
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const double lambda2 = 0.05 + 0.93 * rng.uniform();
        const long kstar = mixing_threshold_kstar(lambda2);
        for (long k = kstar; k <= kstar + 1000; ++k)
            CHECK(std::pow(lambda2, static_cast<double>(k)) <= 1.0 / static_cast<double>(k + 1) + 1e-15);
    }
}

TEST_CASE("mixing report on a stationary start admits c = 0") {
    const MdpModel model = two_state_mdp();
    DistributionSchedule base = two_state_schedule();
    DistributionSchedule stationary(model, two_state_behavior(), base.stationary());
    const MixingReport report = stationary.verify_mixing_bounds(100);
    CHECK(report.c == 0.0);
    CHECK(report.geometric_bound_ok);
    CHECK(report.harmonic_bound_ok);
}

TEST_CASE("mixing bounds hold on the benchmark schedule") {
    DistributionSchedule sched = two_state_schedule();
    const MixingReport report = sched.verify_mixing_bounds(200);
    CHECK(report.geometric_bound_ok);
    CHECK(report.harmonic_bound_ok);
    CHECK(std::abs(report.lambda2 - 0.02) <= 1e-8);
    CHECK(report.kstar == 0);
}

TEST_CASE("mixing bounds hold on a random ergodic schedule") {
    Rng rng(71);
    const MdpModel model = test::random_mdp(4, 2, 0.9, rng);
    DistributionSchedule sched(model, test::random_exploring_policy(4, 2, rng),
                               test::random_distribution(4, rng));
    const MixingReport report = sched.verify_mixing_bounds(500);
    CHECK(report.geometric_bound_ok);
    CHECK(report.harmonic_bound_ok);
}

TEST_CASE("state distribution converges geometrically at rate lambda2") {
    DistributionSchedule sched = two_state_schedule();
    const Vector v_inf = sched.stationary();
    const double lambda2 = sched.lambda2();
    // Fit c' on the early steps, then confirm the decay over the window
    // where the transient is above rounding noise.
    double c_fit = 0.0;
    for (long k = 0; k <= 8; ++k) {
        const double err = (sched.state_distribution_at(k) - v_inf).lpNorm<Eigen::Infinity>();
        if (err <= 1e-13) continue;
        c_fit = std::max(c_fit, err / std::pow(lambda2, static_cast<double>(k)));
    }
    for (long k = 0; k <= 8; ++k) {
        const double err = (sched.state_distribution_at(k) - v_inf).lpNorm<Eigen::Infinity>();
        CHECK(err <= c_fit * std::pow(lambda2, static_cast<double>(k)) + 1e-13);
    }
}

TEST_CASE("m matrix converges to its limit well inside the mixing horizon") {
    DistributionSchedule sched = two_state_schedule();
    const long k_check = 10 * sched.kstar() + 100;
    CHECK((sched.m_matrix_at(k_check) - sched.m_infinity()).lpNorm<Eigen::Infinity>() <= 1e-6);

    const MdpModel grid = grid_world_mdp(2, 2);
    DistributionSchedule grid_sched(grid, StochasticPolicy::uniform(4, 4), Vector::Constant(4, 0.25));
    const long k_grid = 10 * grid_sched.kstar() + 100;
    CHECK((grid_sched.m_matrix_at(k_grid) - grid_sched.m_infinity()).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("schedule rejects non-exploring behavior policies") {
    const MdpModel model = two_state_mdp();
    Matrix probs(2, 2);
    probs << 1.0, 0.0, 0.5, 0.5;
    CHECK_THROWS_AS(DistributionSchedule(model, StochasticPolicy{probs},
                                         two_state_initial_distribution()),
                    ConfigError);
}
