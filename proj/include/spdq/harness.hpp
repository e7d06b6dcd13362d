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

#include "spdq/baselines.hpp"
#include "spdq/instances.hpp"
#include "spdq/oracle.hpp"
#include "spdq/run.hpp"
#include "spdq/schedule.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace spdq {

inline constexpr const char* kVersion = "spdq-0.1.0";

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

enum class MetricKind {
    QError,             // sum_a ||Q*_a - Qhat_a||_inf
    DualPolicyError,    // sum_s ||pi*_s - pihat^d_s|| (inf-norm, or 2-norm variant)
    PrimalPolicyError,  // sum_s ||pi*_s - one_hot(pihat^p(s))||_inf
    DualityGap,         // pseudo duality gap (diagnostic runs only)
    AvgReward,          // windowed sample-average reward of the primal policy
    ValueSuboptimality, // ||V* - V^{pihat^d}||_inf
};

inline std::string metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::QError: return "q_error";
        case MetricKind::DualPolicyError: return "dual_policy_error";
        case MetricKind::PrimalPolicyError: return "primal_policy_error";
        case MetricKind::DualityGap: return "duality_gap";
        case MetricKind::AvgReward: return "avg_reward";
        case MetricKind::ValueSuboptimality: return "value_suboptimality";
    }
    throw std::logic_error("metric_name: unknown kind");
}

inline MetricKind metric_from_name(const std::string& name) {
    for (MetricKind kind : {MetricKind::QError, MetricKind::DualPolicyError, MetricKind::PrimalPolicyError,
                            MetricKind::DualityGap, MetricKind::AvgReward, MetricKind::ValueSuboptimality})
        if (metric_name(kind) == name) return kind;
    throw ConfigError("unknown metric: " + name);
}

/// Views of whatever tables an algorithm exposes at a checkpoint. Null
/// entries mean the algorithm has no such quantity (e.g. Q-learning has
/// no dual table) and metrics that need them are skipped.
struct MetricInputs {
    const Matrix* q_bar = nullptr;
    const Vector* v_bar = nullptr;
    const Matrix* lam_bar = nullptr;
    const Matrix* mu_bar_weighted = nullptr;
};

struct MetricContext {
    const MdpModel* model = nullptr;
    const OracleSolution* oracle = nullptr;
    const SaddleProblem* problem = nullptr;
    int avg_reward_window = 8;
    Index rollout_start = 0;
    bool dual_policy_error_two_norm = false;
    Rng* eval_rng = nullptr;
};

inline bool metric_supported(MetricKind kind, const MetricInputs& in) {
    switch (kind) {
        case MetricKind::QError:
        case MetricKind::PrimalPolicyError:
        case MetricKind::AvgReward: return in.q_bar != nullptr;
        case MetricKind::DualPolicyError:
        case MetricKind::ValueSuboptimality: return in.lam_bar != nullptr;
        case MetricKind::DualityGap:
            return in.q_bar && in.v_bar && in.lam_bar && in.mu_bar_weighted;
    }
    return false;
}

inline double compute_metric(MetricKind kind, const MetricInputs& in, const MetricContext& ctx) {
    detail::require_config(metric_supported(kind, in),
                           "compute_metric: inputs missing for " + metric_name(kind));
    const auto need_oracle = [&]() {
        detail::require_config(ctx.oracle != nullptr, "compute_metric: oracle required for " + metric_name(kind));
    };
    switch (kind) {
        case MetricKind::QError: {
            need_oracle();
            double total = 0.0;
            for (Index a = 0; a < in.q_bar->cols(); ++a)
                total += (ctx.oracle->q_star.col(a) - in.q_bar->col(a)).lpNorm<Eigen::Infinity>();
            return total;
        }
        case MetricKind::DualPolicyError: {
            need_oracle();
            const StochasticPolicy pi = dual_policy(*in.lam_bar);
            double total = 0.0;
            for (Index s = 0; s < pi.n_states(); ++s) {
                Vector diff = -pi.probs.row(s).transpose();
                diff(ctx.oracle->pi_star(s)) += 1.0;
                total += ctx.dual_policy_error_two_norm ? diff.norm() : diff.lpNorm<Eigen::Infinity>();
            }
            return total;
        }
        case MetricKind::PrimalPolicyError: {
            need_oracle();
            const DeterministicPolicy pi = primal_policy(*in.q_bar);
            double total = 0.0;
            for (Index s = 0; s < pi.size(); ++s)
                if (pi(s) != ctx.oracle->pi_star(s)) total += 1.0;
            return total;
        }
        case MetricKind::DualityGap: {
            need_oracle();
            detail::require_config(ctx.problem != nullptr, "compute_metric: duality_gap needs the problem");
            PrimalDualPoint point{*in.q_bar, *in.v_bar, *in.lam_bar, *in.mu_bar_weighted};
            return duality_gap(point, *ctx.oracle, *ctx.problem);
        }
        case MetricKind::AvgReward: {
            detail::require_config(ctx.model != nullptr && ctx.eval_rng != nullptr,
                                   "compute_metric: avg_reward needs a model and an eval stream");
            const DeterministicPolicy pi = primal_policy(*in.q_bar);
            Index s = ctx.rollout_start;
            double total = 0.0;
            for (int t = 0; t < ctx.avg_reward_window; ++t) {
                const auto [next, reward] = sample_step(*ctx.model, s, pi(s), *ctx.eval_rng);
                total += reward;
                s = next;
            }
            return total / static_cast<double>(ctx.avg_reward_window);
        }
        case MetricKind::ValueSuboptimality: {
            need_oracle();
            const Vector v = evaluate_policy(*ctx.model, dual_policy(*in.lam_bar));
            return (ctx.oracle->v_star - v).lpNorm<Eigen::Infinity>();
        }
    }
    throw std::logic_error("compute_metric: unknown kind");
}

// ---------------------------------------------------------------------------
// Traces

struct TraceRow {
    long k;
    std::string metric;
    double value;
};

/// Per-run metric log plus the metadata that goes into the CSV header.
struct RunTrace {
    std::string algorithm;
    double gamma0 = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<TraceRow> rows;

    void append(long k, const std::string& metric, double value) {
        detail::internal_check(std::isfinite(value),
                               "trace: non-finite value for " + metric + " at k=" + std::to_string(k));
        if (!rows.empty() && rows.back().metric == metric)
            detail::internal_check(rows.back().k < k, "trace: non-increasing steps");
        rows.push_back({k, metric, value});
    }

    std::string to_csv() const {
        std::string out;
        out += "# config_hash=" + config_hash + "\n";
        out += "# seed=" + std::to_string(seed) + "\n";
        out += "# algorithm=" + algorithm + "\n";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", gamma0);
        out += std::string("# gamma0=") + buf + "\n";
        out += std::string("# version=") + kVersion + "\n";
        out += "k,metric,value\n";
        for (const TraceRow& row : rows) {
            std::snprintf(buf, sizeof buf, "%.17g", row.value);
            out += std::to_string(row.k) + "," + row.metric + "," + buf + "\n";
        }
        return out;
    }
};

/// FNV-1a over the canonical config dump; identifies the run setup in
/// trace headers.
inline std::string fnv1a_hex(const std::string& data) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

/// Atomic file write: temp file in the target directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        detail::require_config(out.good(), "cannot open for writing: " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Configuration

enum class AlgorithmKind { Spdq, QLearning, SpdRlCorrected, DeterministicPd };

inline std::string algorithm_name(AlgorithmKind kind) {
    switch (kind) {
        case AlgorithmKind::Spdq: return "spdq";
        case AlgorithmKind::QLearning: return "qlearning";
        case AlgorithmKind::SpdRlCorrected: return "spdrl_corrected";
        case AlgorithmKind::DeterministicPd: return "deterministic_pd";
    }
    throw std::logic_error("algorithm_name: unknown kind");
}

inline AlgorithmKind algorithm_from_name(const std::string& name) {
    for (AlgorithmKind kind : {AlgorithmKind::Spdq, AlgorithmKind::QLearning,
                               AlgorithmKind::SpdRlCorrected, AlgorithmKind::DeterministicPd})
        if (algorithm_name(kind) == name) return kind;
    throw ConfigError("unknown algorithm: " + name);
}

/// Fully parsed experiment description.
struct ExperimentConfig {
    MdpModel model;
    StochasticPolicy behavior;
    Vector v0;
    std::optional<double> zeta_override;
    std::optional<long> zeta_horizon;

    std::vector<AlgorithmKind> algorithms;
    long total_steps = 0;
    std::vector<double> gamma0_values;
    double gamma_shift = 1.0;
    std::optional<Vector> eta; // default sigma/|S| * ones
    std::vector<std::uint64_t> seeds;
    bool diagnostic = false;
    SamplingMode sampling = SamplingMode::Trajectory;
    std::optional<std::vector<long>> explicit_checkpoints;

    std::vector<MetricKind> metrics;
    int avg_reward_window = 8;
    bool dual_policy_error_two_norm = false;
    std::filesystem::path output_dir = "out";
    std::string hash; // canonical config digest

    Vector resolved_eta() const {
        if (eta) return *eta;
        return Vector::Constant(model.n_states,
                                model.sigma / static_cast<double>(model.n_states));
    }
};

inline MdpModel model_from_json(const Json& spec) {
    MdpModel model;
    model.n_states = spec.at("n_states").get<Index>();
    model.n_actions = spec.at("n_actions").get<Index>();
    model.discount = spec.at("discount").get<double>();
    model.sigma = spec.at("sigma").get<double>();
    const Json& trans = spec.at("transitions");
    detail::require_config(trans.is_array() && static_cast<Index>(trans.size()) == model.n_actions,
                           "model: transitions must list one matrix per action");
    for (const Json& rows : trans) {
        Matrix p(model.n_states, model.n_states);
        detail::require_config(static_cast<Index>(rows.size()) == model.n_states,
                               "model: transition matrix row count mismatch");
        for (Index s = 0; s < model.n_states; ++s)
            for (Index t = 0; t < model.n_states; ++t) p(s, t) = rows.at(s).at(t).get<double>();
        model.transitions.push_back(std::move(p));
    }
    const Json& rewards = spec.at("rewards");
    const std::string kind = rewards.at("kind").get<std::string>();
    const auto read_table = [&](const Json& table) {
        Matrix m(model.n_states, model.n_actions);
        detail::require_config(static_cast<Index>(table.size()) == model.n_states,
                               "model: reward table row count mismatch");
        for (Index s = 0; s < model.n_states; ++s)
            for (Index a = 0; a < model.n_actions; ++a) m(s, a) = table.at(s).at(a).get<double>();
        return m;
    };
    if (kind == "deterministic")
        model.rewards = RewardModel::deterministic(read_table(rewards.at("table")));
    else if (kind == "uniform")
        model.rewards = RewardModel::uniform_interval(read_table(rewards.at("lo")),
                                                      read_table(rewards.at("hi")));
    else
        throw ConfigError("model: unknown reward kind " + kind);
    try {
        model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    return model;
}

inline Json model_to_json(const MdpModel& model) {
    Json spec;
    spec["n_states"] = model.n_states;
    spec["n_actions"] = model.n_actions;
    spec["discount"] = model.discount;
    spec["sigma"] = model.sigma;
    Json trans = Json::array();
    for (const Matrix& p : model.transitions) {
        Json rows = Json::array();
        for (Index s = 0; s < p.rows(); ++s) {
            Json row = Json::array();
            for (Index t = 0; t < p.cols(); ++t) row.push_back(p(s, t));
            rows.push_back(row);
        }
        trans.push_back(rows);
    }
    spec["transitions"] = trans;
    return spec;
}

inline ExperimentConfig parse_experiment_config(const Json& doc,
                                                const std::filesystem::path& base_dir = ".") {
    ExperimentConfig cfg;
    try {
        const Json& model_spec = doc.at("model");
        bool builtin_two_state = false;
        if (model_spec.contains("builtin")) {
            const std::string name = model_spec.at("builtin").get<std::string>();
            if (name == "two_state_mdp") {
                cfg.model = two_state_mdp();
                builtin_two_state = true;
            } else if (name == "grid_world") {
                cfg.model = grid_world_mdp(model_spec.at("width").get<Index>(),
                                           model_spec.at("height").get<Index>());
            } else {
                throw ConfigError("unknown builtin model: " + name);
            }
        } else if (model_spec.contains("file")) {
            const std::filesystem::path path =
                base_dir / model_spec.at("file").get<std::string>();
            detail::require_config(std::filesystem::exists(path),
                                   "model file not found: " + path.string());
            std::ifstream in(path);
            cfg.model = model_from_json(Json::parse(in));
        } else if (model_spec.contains("inline")) {
            cfg.model = model_from_json(model_spec.at("inline"));
        } else {
            throw ConfigError("model: need one of builtin/file/inline");
        }

        const Json schedule_spec = doc.value("schedule", Json::object());
        if (schedule_spec.contains("behavior")) {
            Matrix probs(cfg.model.n_states, cfg.model.n_actions);
            const Json& rows = schedule_spec.at("behavior");
            detail::require_config(static_cast<Index>(rows.size()) == cfg.model.n_states,
                                   "schedule: behavior row count mismatch");
            for (Index s = 0; s < cfg.model.n_states; ++s)
                for (Index a = 0; a < cfg.model.n_actions; ++a)
                    probs(s, a) = rows.at(s).at(a).get<double>();
            cfg.behavior = {probs};
        } else if (builtin_two_state) {
            cfg.behavior = two_state_behavior();
        } else {
            cfg.behavior = StochasticPolicy::uniform(cfg.model.n_states, cfg.model.n_actions);
        }
        if (schedule_spec.contains("v0")) {
            const Json& entries = schedule_spec.at("v0");
            detail::require_config(static_cast<Index>(entries.size()) == cfg.model.n_states,
                                   "schedule: v0 size mismatch");
            cfg.v0.resize(cfg.model.n_states);
            for (Index s = 0; s < cfg.model.n_states; ++s) cfg.v0(s) = entries.at(s).get<double>();
        } else if (builtin_two_state) {
            cfg.v0 = two_state_initial_distribution();
        } else {
            cfg.v0 = Vector::Constant(cfg.model.n_states,
                                      1.0 / static_cast<double>(cfg.model.n_states));
        }
        if (schedule_spec.contains("zeta")) cfg.zeta_override = schedule_spec.at("zeta").get<double>();
        if (schedule_spec.contains("horizon")) cfg.zeta_horizon = schedule_spec.at("horizon").get<long>();

        for (const Json& name : doc.value("algorithms", Json::array({"spdq"})))
            cfg.algorithms.push_back(algorithm_from_name(name.get<std::string>()));
        detail::require_config(!cfg.algorithms.empty(), "config: no algorithms selected");

        const Json run_spec = doc.value("run", Json::object());
        cfg.total_steps = run_spec.value("T", 1000L);
        detail::require_config(cfg.total_steps >= 1, "run: T must be >= 1");
        const Json g0 = run_spec.value("gamma0", Json(1.0));
        if (g0.is_array())
            for (const Json& g : g0) cfg.gamma0_values.push_back(g.get<double>());
        else
            cfg.gamma0_values.push_back(g0.get<double>());
        detail::require_config(!cfg.gamma0_values.empty(), "run: gamma0 empty");
        cfg.gamma_shift = run_spec.value("gamma_shift", 1.0);
        detail::require_config(cfg.gamma_shift >= 1.0, "run: gamma_shift must be >= 1");
        if (run_spec.contains("eta")) {
            const Json& eta_spec = run_spec.at("eta");
            if (eta_spec.is_array()) {
                Vector eta(cfg.model.n_states);
                detail::require_config(static_cast<Index>(eta_spec.size()) == cfg.model.n_states,
                                       "run: eta size mismatch");
                for (Index s = 0; s < cfg.model.n_states; ++s) eta(s) = eta_spec.at(s).get<double>();
                cfg.eta = eta;
            } else {
                cfg.eta = Vector::Constant(cfg.model.n_states, eta_spec.get<double>());
            }
            detail::require_config((cfg.eta->array() > 0.0).all(), "run: eta must be positive");
        }
        for (const Json& s : run_spec.value("seeds", Json::array({0})))
            cfg.seeds.push_back(s.get<std::uint64_t>());
        detail::require_config(!cfg.seeds.empty(), "run: at least one seed required");
        cfg.diagnostic = run_spec.value("diagnostic", false);
        const std::string sampling = run_spec.value("sampling", std::string("trajectory"));
        if (sampling == "trajectory")
            cfg.sampling = SamplingMode::Trajectory;
        else if (sampling == "iid")
            cfg.sampling = SamplingMode::Iid;
        else
            throw ConfigError("run: unknown sampling mode " + sampling);
        if (run_spec.contains("checkpoints")) {
            std::vector<long> points;
            for (const Json& k : run_spec.at("checkpoints")) points.push_back(k.get<long>());
            cfg.explicit_checkpoints = std::move(points);
        }

        const Json metric_spec = doc.value("metrics", Json::array({"q_error"}));
        for (const Json& name : metric_spec) cfg.metrics.push_back(metric_from_name(name.get<std::string>()));
        detail::require_config(!cfg.metrics.empty(), "config: metrics list is empty");
        cfg.avg_reward_window = doc.value("avg_reward_window", 8);
        cfg.dual_policy_error_two_norm = doc.value("dual_policy_error_norm", std::string("inf")) == "2";
        cfg.output_dir = base_dir / doc.value("output_dir", std::string("out"));
        // The hash identifies the run setup; the output location is not
        // part of it, so traces re-run into another directory compare equal.
        Json hashed = doc;
        hashed.erase("output_dir");
        cfg.hash = fnv1a_hex(hashed.dump());
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    for (MetricKind kind : cfg.metrics)
        if (kind == MetricKind::DualityGap)
            detail::require_config(cfg.diagnostic, "config: duality_gap requires diagnostic mode");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    detail::require_config(std::filesystem::exists(path), "config file not found: " + path.string());
    std::ifstream in(path);
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    return parse_experiment_config(doc, path.parent_path());
}

/// Default checkpoint grid: 0 plus quarter-decade powers of ten up to T.
inline std::vector<long> default_checkpoints(long total_steps) {
    std::set<long> points{0, total_steps};
    for (int j = 0;; ++j) {
        const long k = static_cast<long>(std::ceil(std::pow(10.0, j / 4.0)));
        if (k > total_steps) break;
        points.insert(k);
    }
    return {points.begin(), points.end()};
}

} // namespace spdq
