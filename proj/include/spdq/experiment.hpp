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

#include "spdq/harness.hpp"

#include <cstdlib>
#include <mutex>

namespace spdq {

/// Solved reference data shared by every task of one experiment.
struct ExperimentOracle {
    SaddleProblem problem;
    OracleSolution solution;
    double zeta = 0.0;
};

inline bool needs_oracle(const std::vector<MetricKind>& metrics) {
    for (MetricKind kind : metrics)
        if (kind != MetricKind::AvgReward) return true;
    return false;
}

/// Builds the schedule, resolves zeta/eta and solves the reference
/// problem once for an experiment config.
inline ExperimentOracle solve_experiment_oracle(const ExperimentConfig& cfg) {
    DistributionSchedule sched(cfg.model, cfg.behavior, cfg.v0, cfg.zeta_override, cfg.zeta_horizon);
    ExperimentOracle out;
    out.zeta = sched.zeta();
    out.problem = SaddleProblem(cfg.model, cfg.resolved_eta(), sched.m_infinity(), out.zeta);
    out.solution = solve_optimal(out.problem);
    solution_bounds(out.problem, out.solution);
    return out;
}

namespace detail {

struct ExperimentTask {
    AlgorithmKind algorithm;
    double gamma0;
    std::uint64_t seed;
};

/// Runs one (algorithm, gamma0, seed) task and renders its trace.
inline RunTrace run_task(const ExperimentConfig& cfg, const ExperimentOracle* oracle,
                         const ExperimentTask& task) {
    RunTrace trace;
    trace.algorithm = algorithm_name(task.algorithm);
    trace.gamma0 = task.gamma0;
    trace.seed = task.seed;
    trace.config_hash = cfg.hash;

    // Every task owns its schedule instance (memoized caches are not
    // shared across threads) and its evaluation stream.
    DistributionSchedule sched(cfg.model, cfg.behavior, cfg.v0, cfg.zeta_override, cfg.zeta_horizon);
    Rng eval_rng = Rng::stream(task.seed, streams::kEval);

    MetricContext ctx;
    ctx.model = &cfg.model;
    ctx.oracle = oracle ? &oracle->solution : nullptr;
    ctx.problem = oracle ? &oracle->problem : nullptr;
    ctx.avg_reward_window = cfg.avg_reward_window;
    ctx.dual_policy_error_two_norm = cfg.dual_policy_error_two_norm;
    ctx.eval_rng = &eval_rng;

    RunConfig run_cfg;
    run_cfg.total_steps = cfg.total_steps;
    run_cfg.step = {task.gamma0, cfg.gamma_shift};
    run_cfg.eta = cfg.resolved_eta();
    run_cfg.zeta = oracle ? oracle->zeta : sched.zeta();
    run_cfg.seed = task.seed;
    run_cfg.checkpoints =
        cfg.explicit_checkpoints ? *cfg.explicit_checkpoints : default_checkpoints(cfg.total_steps);
    run_cfg.diagnostic = cfg.diagnostic;
    run_cfg.sampling = cfg.sampling;

    const auto record = [&](long k, const MetricInputs& inputs) {
        for (MetricKind kind : cfg.metrics) {
            if (!metric_supported(kind, inputs)) continue; // not exposed by this algorithm
            trace.append(k, metric_name(kind), compute_metric(kind, inputs, ctx));
        }
    };

    switch (task.algorithm) {
        case AlgorithmKind::Spdq: {
            run(cfg.model, sched, run_cfg, [&](long k, const RunningAverages& avg) {
                const Matrix q = avg.q_bar();
                const Vector v = avg.v_bar();
                const Matrix lam = avg.lam_bar();
                MetricInputs inputs{&q, &v, &lam, nullptr};
                Matrix mu_w;
                if (cfg.diagnostic) {
                    mu_w = avg.mu_bar_weighted();
                    inputs.mu_bar_weighted = &mu_w;
                }
                record(k, inputs);
            });
            break;
        }
        case AlgorithmKind::QLearning: {
            Rng env_rng = Rng::stream(task.seed, streams::kEnv);
            TrajectoryStream stream(cfg.model, cfg.behavior, cfg.v0, env_rng);
            q_learning_run(stream, cfg.model.n_states, cfg.model.n_actions, cfg.model.sigma,
                           cfg.model.discount, run_cfg, [&](long k, const Matrix& q) {
                               record(k, MetricInputs{&q, nullptr, nullptr, nullptr});
                           });
            break;
        }
        case AlgorithmKind::SpdRlCorrected: {
            Rng env_rng = Rng::stream(task.seed, streams::kEnv);
            TrajectoryStream stream(cfg.model, cfg.behavior, cfg.v0, env_rng);
            spd_rl_corrected_run(stream, cfg.model.n_states, cfg.model.n_actions, cfg.model.sigma,
                                 cfg.model.discount, run_cfg, [&](long k, const Matrix& corrected) {
                                     record(k, MetricInputs{nullptr, nullptr, &corrected, nullptr});
                                 });
            break;
        }
        case AlgorithmKind::DeterministicPd: {
            const FeasibleSets sets = FeasibleSets::create(cfg.model.sigma, cfg.model.discount,
                                                           run_cfg.eta, run_cfg.zeta);
            Rng init_rng = Rng::stream(task.seed, streams::kInit);
            IterateState st =
                random_iterate(cfg.model.n_states, cfg.model.n_actions, sets, init_rng);
            SaddleProblem problem(cfg.model, run_cfg.eta, sched.m_infinity(), run_cfg.zeta);
            RunningAverages avg =
                RunningAverages::zero(cfg.model.n_states, cfg.model.n_actions, true);
            std::size_t next_cp = 0;
            const auto emit = [&](long k, const IterateState& current, const Matrix& m_k) {
                while (next_cp < run_cfg.checkpoints.size() && run_cfg.checkpoints[next_cp] == k) {
                    RunningAverages snapshot = avg;
                    if (snapshot.count == 0) snapshot.accumulate(current, &m_k);
                    const Matrix q = snapshot.q_bar();
                    const Vector v = snapshot.v_bar();
                    const Matrix lam = snapshot.lam_bar();
                    const Matrix mu_w = snapshot.mu_bar_weighted();
                    record(k, MetricInputs{&q, &v, &lam, &mu_w});
                    ++next_cp;
                }
            };
            for (long k = 0; k < run_cfg.total_steps; ++k) {
                const Matrix m_k = sched.m_matrix_at(k);
                emit(k, st, m_k);
                avg.accumulate(st, &m_k);
                PrimalDualPoint point{st.q, st.v, st.lam, st.mu};
                const PrimalDualPoint next =
                    deterministic_pd_step(point, problem, m_k, run_cfg.step.at(k), sets);
                st.q = next.q;
                st.v = next.v;
                st.lam = next.lam;
                st.mu = next.mu;
                st.k += 1;
            }
            emit(run_cfg.total_steps, st, sched.m_matrix_at(run_cfg.total_steps));
            break;
        }
    }
    return trace;
}

} // namespace detail

/// Name of the trace file of one task.
inline std::string trace_filename(const std::string& algorithm, double gamma0, std::uint64_t seed) {
    char g[32];
    std::snprintf(g, sizeof g, "%g", gamma0);
    return algorithm + "_g" + g + "_s" + std::to_string(seed) + ".csv";
}

/// Runs every (algorithm, gamma0, seed) combination of the experiment over
/// a worker pool (size from SPDQ_WORKERS, default hardware concurrency)
/// and writes one CSV per task atomically. Returns the written paths.
inline std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& cfg) {
    std::optional<ExperimentOracle> oracle;
    if (needs_oracle(cfg.metrics) || cfg.diagnostic) oracle = solve_experiment_oracle(cfg);

    std::vector<detail::ExperimentTask> tasks;
    for (AlgorithmKind algorithm : cfg.algorithms)
        for (double gamma0 : cfg.gamma0_values)
            for (std::uint64_t seed : cfg.seeds) tasks.push_back({algorithm, gamma0, seed});

    std::filesystem::create_directories(cfg.output_dir);
    std::vector<std::filesystem::path> outputs(tasks.size());

    unsigned workers = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("SPDQ_WORKERS")) {
        const long parsed = std::strtol(env, nullptr, 10);
        detail::require_config(parsed >= 1, "SPDQ_WORKERS must be a positive integer");
        workers = static_cast<unsigned>(parsed);
    }
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(tasks.size())));

    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::string first_error;

    const auto worker = [&]() {
        while (!failed.load()) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                const RunTrace trace = detail::run_task(cfg, oracle ? &*oracle : nullptr, tasks[i]);
                const std::filesystem::path path =
                    cfg.output_dir /
                    trace_filename(trace.algorithm, trace.gamma0, trace.seed);
                write_file_atomic(path, trace.to_csv());
                outputs[i] = path;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true)) first_error = e.what();
            }
        }
    };

    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (failed.load()) throw NumericalError("run_experiment: task failed: " + first_error);

    std::vector<std::filesystem::path> written;
    for (const auto& path : outputs)
        if (!path.empty()) written.push_back(path);
    return written;
}

// ---------------------------------------------------------------------------
// Oracle snapshot and golden regression

/// JSON snapshot of the solved reference problem (solution tables plus the
/// schedule constants they were derived from).
inline Json oracle_snapshot(const ExperimentConfig& cfg) {
    DistributionSchedule sched(cfg.model, cfg.behavior, cfg.v0, cfg.zeta_override, cfg.zeta_horizon);
    const SaddleProblem problem(cfg.model, cfg.resolved_eta(), sched.m_infinity(), sched.zeta());
    const OracleSolution sol = solve_optimal(problem);
    solution_bounds(problem, sol);

    const auto vec = [](const Vector& v) {
        Json arr = Json::array();
        for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
        return arr;
    };
    const auto table = [](const Matrix& m) {
        Json rows = Json::array();
        for (Index s = 0; s < m.rows(); ++s) {
            Json row = Json::array();
            for (Index a = 0; a < m.cols(); ++a) row.push_back(m(s, a));
            rows.push_back(row);
        }
        return rows;
    };

    Json out;
    out["eta"] = vec(problem.eta);
    out["zeta"] = sched.zeta();
    out["p_theta"] = table(sched.p_theta());
    out["v_infinity"] = vec(sched.stationary());
    out["m_infinity"] = table(sched.m_infinity());
    out["v_star"] = vec(sol.v_star);
    out["q_star"] = table(sol.q_star);
    out["lambda_star"] = table(sol.lambda_star);
    out["mu_star_scaled"] = table(sol.mu_star_scaled);
    Json pi = Json::array();
    for (Index s = 0; s < sol.pi_star.size(); ++s) pi.push_back(sol.pi_star(s));
    out["pi_star"] = pi;
    return out;
}

struct GoldenEntry {
    std::string name;
    double expected;
    double actual;
    bool pass;
};

struct GoldenReport {
    std::vector<GoldenEntry> entries;
    bool pass = true;
    double tolerance = 1e-3;

    std::string format() const {
        std::string out;
        char buf[160];
        for (const GoldenEntry& e : entries) {
            std::snprintf(buf, sizeof buf, "%-4s %-22s expected % .6f actual % .6f delta % .2e\n",
                          e.pass ? "ok" : "FAIL", e.name.c_str(), e.expected, e.actual,
                          std::abs(e.actual - e.expected));
            out += buf;
        }
        out += pass ? "golden regression: PASS\n" : "golden regression: FAIL\n";
        return out;
    }
};

/// Built-in golden constants of the two-state benchmark (same content as
/// data/two_state_golden.json).
inline Json default_golden_table() {
    return Json{{"eta", {0.1, 0.1}},
                {"zeta", 0.0856},
                {"p_theta", {{0.44, 0.56}, {0.42, 0.58}}},
                {"v_infinity", {0.4286, 0.5714}},
                {"m_infinity", {{0.0857, 0.3429}, {0.4000, 0.1714}}},
                {"v_star", {20.0690, 18.6897}},
                {"q_star", {{20.0690, 19.4414}, {18.1931, 18.6897}}},
                {"lambda_star", {{0.9379, 0.0}, {0.0, 1.0621}}},
                {"mu_star_scaled", {{10.9425, 0.0}, {0.0, 6.1954}}}};
}

/// Recomputes the two-state benchmark constants and diffs them against a
/// golden table (checked-in file or the embedded copy) entry by entry.
inline GoldenReport golden_regression(const std::optional<std::filesystem::path>& golden_path = std::nullopt,
                                      double tolerance = 1e-3) {
    Json golden;
    if (golden_path) {
        detail::require_config(std::filesystem::exists(*golden_path),
                               "golden file not found: " + golden_path->string());
        std::ifstream in(*golden_path);
        try {
            golden = Json::parse(in);
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("golden parse: ") + e.what());
        }
    } else {
        golden = default_golden_table();
    }

    ExperimentConfig cfg;
    cfg.model = two_state_mdp();
    cfg.behavior = two_state_behavior();
    cfg.v0 = two_state_initial_distribution();
    Vector eta(2);
    const Json& eta_spec = golden.at("eta");
    eta << eta_spec.at(0).get<double>(), eta_spec.at(1).get<double>();
    cfg.eta = eta;
    const Json actual = oracle_snapshot(cfg);

    GoldenReport report;
    report.tolerance = tolerance;
    const auto compare = [&](const std::string& name, const Json& expected, const Json& computed) {
        const auto scalar = [&](const std::string& label, double e, double a) {
            const bool ok = std::abs(e - a) <= tolerance;
            report.entries.push_back({label, e, a, ok});
            report.pass = report.pass && ok;
        };
        if (expected.is_number()) {
            scalar(name, expected.get<double>(), computed.get<double>());
        } else {
            for (std::size_t i = 0; i < expected.size(); ++i) {
                if (expected.at(i).is_number())
                    scalar(name + "[" + std::to_string(i) + "]", expected.at(i).get<double>(),
                           computed.at(i).get<double>());
                else
                    for (std::size_t j = 0; j < expected.at(i).size(); ++j)
                        scalar(name + "[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                               expected.at(i).at(j).get<double>(),
                               computed.at(i).at(j).get<double>());
            }
        }
    };
    for (const std::string name : {"p_theta", "v_infinity", "m_infinity", "zeta", "v_star", "q_star",
                                   "lambda_star", "mu_star_scaled"})
        compare(name, golden.at(name), actual.at(name));
    return report;
}

} // namespace spdq
