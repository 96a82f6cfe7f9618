#pragma once

#include "piesn/common.hpp"
#include "piesn/dataset.hpp"
#include "piesn/mpc.hpp"
#include "piesn/reservoir.hpp"
#include "piesn/training.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace piesn {

/// Hyperparameter grid for the ridge stage. Empty alpha/rho vectors reuse
/// the template config's values.
struct GridSpec {
    std::vector<double> delta_in;
    std::vector<double> delta_fb;
    std::vector<double> gamma;
    std::vector<double> alpha;
    std::vector<double> rho;

    void validate() const;
};

struct GridCell {
    double delta_in = 0, delta_fb = 0, gamma = 0, alpha = 0, rho = 0;
    double val_mse = 0;
    bool diverged = false;
};

struct GridResult {
    GridCell best;
    std::vector<GridCell> table;
    ReservoirConfig best_cfg;  // template with best hyperparameters applied
};

/// Trains a ridge readout on the training rows, scores free-run MSE on the
/// validation rows, returns the argmin (ties broken by lowest gamma, then
/// delta_in, delta_fb, alpha, rho). Throws NumericsError when every cell
/// diverges.
GridResult grid_search(const ReservoirConfig& base, const Dataset& ds, const GridSpec& grid);

struct EvalOutcome {
    double colloc_mse = std::numeric_limits<double>::infinity();
    double test_mse = std::numeric_limits<double>::infinity();
    bool unstable = false;
    int diverged_at = -1;
};

/// Teacher-forces the labeled region (the trailing `warm_steps` rows;
/// warm_steps < 0 uses all of it), then free-runs across collocation + test
/// and scores each region against the withheld labels in the ESN domain.
/// Divergence reports +inf and flags the run unstable.
EvalOutcome evaluate_mse(const Reservoir& res, const Readout& ro, const Dataset& ds,
                         int warm_steps = -1);

struct RunRecord {
    std::string experiment, system, architecture;
    int n_x = 0, n_t = 0, n_f = 0;
    std::uint64_t reservoir_seed = 0, signal_seed = 0;
    double setting = 0.0;  // sweep coordinate (mu, N_t, N_x, ...)
    double colloc_mse = 0.0, test_mse = 0.0;
    bool excluded = false;
    std::string exclusion_reason;
};

struct Aggregate {
    std::string architecture;
    double setting = 0.0;
    double colloc_mean = 0.0, colloc_std = 0.0;
    double test_mean = 0.0, test_std = 0.0;
    int runs = 0, excluded = 0;
};

/// Experiment-specific numeric table with an optional label column.
struct NamedTable {
    std::string name;
    std::vector<std::string> header;      // excludes the label column
    std::vector<std::string> row_labels;  // empty => no label column
    Matrix rows;
};

struct ExperimentResult {
    std::string name;
    std::vector<RunRecord> runs;
    std::vector<Aggregate> aggregates;  // ordered reduction over non-excluded runs
    std::vector<NamedTable> tables;

    int scheduled() const { return static_cast<int>(runs.size()); }
    void write_csv(const std::string& dir) const;  // runs.csv + summary.csv + tables
};

Aggregate aggregate_runs(const std::vector<RunRecord>& runs, const std::string& arch, double setting);

}  // namespace piesn
