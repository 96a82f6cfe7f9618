#pragma once

#include "piesn/common.hpp"
#include "piesn/signals.hpp"
#include "piesn/systems.hpp"
#include "piesn/timeseries.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>

namespace piesn {

/// Contiguous split of one simulated trajectory, in temporal order:
/// training (n_te), validation (n_ve), collocation (n_f), test (n_test).
struct SplitSpec {
    int n_te = 0;
    int n_ve = 0;
    int n_f = 0;
    int n_test = 0;

    int n_t() const { return n_te + n_ve; }
    int total() const { return n_te + n_ve + n_f + n_test; }
    void validate() const;
};

/// `labeled` is the union of train and validation (the N_t rows the readout
/// may be fit on).
enum class Region { train, validation, labeled, collocation, test };

/// Affine map between the ESN's working domain and physical units:
/// y_phys = scale .* y_esn + offset. Identity when normalization is off.
struct OutputScaling {
    Vector scale;   // empty => identity
    Vector offset;

    bool identity() const { return scale.size() == 0; }
    Matrix to_physical(const Matrix& y_esn) const;  // columns are timesteps
};

/// What the physics-informed trainer is allowed to see: labeled training
/// data plus collocation *inputs* only. Collocation/test labels are not
/// reachable from here.
struct TrainView {
    Matrix train_inputs;    // N_t x n_u, ESN domain
    Matrix train_targets;   // N_t x n_y, ESN domain
    Matrix colloc_inputs;   // N_f x n_u, ESN domain
    Matrix colloc_inputs_phys;  // N_f x n_u, physical units (for the residual)
    OutputScaling scaling;
    double dt = 1.0;
    // Trailing labeled rows scored by free run for candidate selection
    // during refinement (0 disables; labels there are training labels, so
    // no withheld data is touched).
    int n_val = 0;
};

/// One simulated trajectory with its split and optional min-max
/// normalization (bounds computed over the training region only and stored
/// with the dataset). Withheld labels are guarded: training-facing accessors
/// throw GuardError outside the training region.
class Dataset {
public:
    Dataset() = default;
    Dataset(TimeSeries data, SplitSpec split, bool normalize);

    const TimeSeries& raw() const { return data_; }
    const SplitSpec& split() const { return split_; }
    double dt() const { return data_.dt; }
    bool normalized() const { return normalized_; }
    const OutputScaling& scaling() const { return scaling_; }

    int row_begin(Region r) const;
    int row_count(Region r) const;

    /// Inputs in the ESN domain (normalized when the dataset is normalized).
    Matrix esn_inputs(Region r) const;
    /// Inputs in physical units.
    Matrix phys_inputs(Region r) const;

    /// Labels in the ESN domain. Guarded: only Region::train and
    /// Region::validation may be read through this accessor.
    Matrix labels(Region r) const;

    /// Withheld labels for evaluation code paths (metrics, plots). ESN domain.
    Matrix evaluation_labels(Region r) const;

    TrainView train_view() const;

    nlohmann::json metadata() const;

    /// Persists data CSV + metadata sidecar `<path>.meta.json`.
    void save(const std::string& csv_path) const;
    static Dataset load(const std::string& csv_path);

private:
    Matrix esn_rows(const Matrix& phys, const Vector& lo, const Vector& hi, int begin, int count) const;

    TimeSeries data_;
    SplitSpec split_;
    bool normalized_ = false;
    Vector in_lo_, in_hi_, out_lo_, out_hi_;
    OutputScaling scaling_;
};

/// Simulates one continuous trajectory of `split.total()` steps under a
/// fresh excitation signal and splits it by index. Collocation/test labels
/// are retained for evaluation only.
Dataset make_dataset(const OdeSystem& sys, const SignalSpec& signal, const SplitSpec& split,
                     double dt, const Vector& y0, bool normalize);

}  // namespace piesn
