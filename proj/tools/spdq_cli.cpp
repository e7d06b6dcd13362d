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

#include "spdq/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int run_command(const std::string& config_path) {
    const spdq::ExperimentConfig cfg = spdq::load_experiment_config(config_path);
    const auto files = spdq::run_experiment(cfg);
    for (const auto& path : files) std::cout << path.string() << "\n";
    return 0;
}

int oracle_command(const std::string& config_path, const std::string& out_path) {
    const spdq::ExperimentConfig cfg = spdq::load_experiment_config(config_path);
    const spdq::Json snapshot = spdq::oracle_snapshot(cfg);
    if (out_path.empty()) {
        std::cout << snapshot.dump(2) << "\n";
    } else {
        spdq::write_file_atomic(out_path, snapshot.dump(2) + "\n");
        std::cout << out_path << "\n";
    }
    return 0;
}

int golden_command(const std::string& golden_path, double tolerance) {
    std::optional<std::filesystem::path> path;
    if (!golden_path.empty()) path = golden_path;
    const spdq::GoldenReport report = spdq::golden_regression(path, tolerance);
    std::cout << report.format();
    return report.pass ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic primal-dual Q-learning experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
    run_cmd->add_option("config", config_path, "JSON experiment config")->required();

    std::string oracle_config, oracle_out;
    auto* oracle_cmd = app.add_subcommand("oracle", "Print the exact solution snapshot for a config");
    oracle_cmd->add_option("config", oracle_config, "JSON experiment config")->required();
    oracle_cmd->add_option("-o,--output", oracle_out, "Write the snapshot to a file");

    std::string golden_path;
    double golden_tolerance = 1e-3;
    auto* golden_cmd = app.add_subcommand("golden", "Two-state benchmark constants regression");
    golden_cmd->add_option("--golden", golden_path, "Golden JSON table (default: embedded copy)");
    golden_cmd->add_option("--tolerance", golden_tolerance, "Absolute tolerance (default 1e-3)");

    double epsilon = 0.1, delta = 0.1, zeta = 1.0, alpha = 0.9, sigma = 1.0, gamma0 = 1.0, beta0 = 0.0;
    long states = 2, actions = 2;
    std::string mode = "gap";
    auto* cx_cmd = app.add_subcommand("complexity", "Print the iteration lower bounds");
    cx_cmd->add_option("--epsilon", epsilon, "Target accuracy in (0,1)")->required();
    cx_cmd->add_option("--delta", delta, "Failure probability in (0,1/e)")->required();
    cx_cmd->add_option("--states", states, "Number of states");
    cx_cmd->add_option("--actions", actions, "Number of actions");
    cx_cmd->add_option("--zeta", zeta, "State-action distribution floor");
    cx_cmd->add_option("--alpha", alpha, "Discount factor");
    cx_cmd->add_option("--sigma", sigma, "Reward upper bound");
    cx_cmd->add_option("--gamma0", gamma0, "Step-size constant");
    cx_cmd->add_option("--beta0", beta0, "Distribution drift constant");
    cx_cmd->add_option("--mode", mode, "gap | policy");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return run_command(config_path);
        if (oracle_cmd->parsed()) return oracle_command(oracle_config, oracle_out);
        if (golden_cmd->parsed()) return golden_command(golden_path, golden_tolerance);
        if (cx_cmd->parsed()) {
            const auto kind = mode == "policy" ? spdq::ComplexityMode::Policy
                             : mode == "gap"   ? spdq::ComplexityMode::Gap
                                               : throw spdq::ConfigError("mode must be gap or policy");
            const double bound = spdq::sample_complexity(epsilon, delta, states, actions, zeta, alpha,
                                                         sigma, gamma0, beta0, kind);
            std::printf("T >= %.0f\n", bound);
            return 0;
        }
    } catch (const spdq::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
