#pragma once

#include "piesn/common.hpp"
#include "piesn/dataset.hpp"
#include "piesn/mpc.hpp"
#include "piesn/reservoir.hpp"
#include "piesn/signals.hpp"
#include "piesn/training.hpp"

#include <nlohmann/json_fwd.hpp>

#include <memory>
#include <string>

namespace piesn {

/// Loads and schema-validates a run config. Unknown keys are rejected with
/// their field path; all errors are ConfigError (CLI exit code 2).
nlohmann::json load_config(const std::string& path);
void validate_config(const nlohmann::json& cfg);

/// Section parsers (each validates invariants and applies defaults).
std::unique_ptr<OdeSystem> parse_system(const nlohmann::json& cfg);
SignalSpec parse_signal(const nlohmann::json& cfg, int channels, std::uint64_t default_seed);
SplitSpec parse_split(const nlohmann::json& cfg);
ReservoirConfig parse_reservoir(const nlohmann::json& cfg, int n_u, int n_y);
PiTrainConfig parse_training(const nlohmann::json& cfg);
MpcConfig parse_mpc(const nlohmann::json& cfg, int n_u);
Vector parse_vector(const nlohmann::json& v, const std::string& path);

}  // namespace piesn
