#pragma once

#include "piesn/harness.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>

namespace piesn {

/// Reproduction suites at desk scale. Each runner orchestrates
/// seeds x settings, excludes unstable runs with a logged reason, and
/// emits aggregate tables plus one record per run. All knobs come from the
/// `experiment` section of the run config; paper-derived defaults apply.
ExperimentResult run_table1(const nlohmann::json& cfg);
ExperimentResult run_reservoir_sweep(const nlohmann::json& cfg);
ExperimentResult run_datasize_sweep(const nlohmann::json& cfg);
ExperimentResult run_robustness(const nlohmann::json& cfg);
ExperimentResult run_esp(const nlohmann::json& cfg);
ExperimentResult run_mpc_comparison(const nlohmann::json& cfg);

/// Dispatch by suite name ("table1", "reservoir-sweep", "datasize-sweep",
/// "robustness", "esp", "mpc-comparison").
ExperimentResult run_suite(const std::string& name, const nlohmann::json& cfg);

}  // namespace piesn
