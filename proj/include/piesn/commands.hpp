#pragma once

#include <string>

namespace piesn {

/// CLI/C-API exit codes.
enum ExitCode : int {
    exit_ok = 0,
    exit_error = 1,        // I/O or internal failure
    exit_config = 2,       // malformed config
    exit_acceptance = 3,   // configured thresholds not met
    exit_instability = 4,  // numerical instability
};

int cmd_simulate(const std::string& config_path, const std::string& output_dir);
int cmd_train(const std::string& config_path, const std::string& output_dir);
int cmd_evaluate(const std::string& config_path, const std::string& output_dir);
int cmd_mpc(const std::string& config_path, const std::string& output_dir);
int cmd_suite(const std::string& config_path, const std::string& output_dir);

/// Dispatch by subcommand name; returns an ExitCode value and reports the
/// failure reason on stderr (and in <output_dir>/run.log).
int run_command(const std::string& command, const std::string& config_path,
                const std::string& output_dir);

/// Same, with a JSON object of top-level config overrides (CLI flags).
int run_command_overrides(const std::string& command, const std::string& config_path,
                          const std::string& output_dir, const std::string& overrides_json);

/// Failure message of the last run_command* call on this thread (empty on
/// success); what the C API reports through piesn_last_error().
const std::string& last_command_error();

}  // namespace piesn
