#pragma once

#include "piesn/common.hpp"

#include <cstdint>

namespace piesn {

struct ReservoirConfig {
    int n_x = 100;        // reservoir size
    int n_u = 1;          // input dimension
    int n_y = 1;          // output dimension
    double alpha = 1.0;   // leak rate, (0, 1]
    double rho_star = 0.8;  // target spectral radius, (0, 1)
    double delta_in = 0.1;  // input scaling
    double delta_fb = 0.1;  // feedback scaling
    double delta_b = 0.0;   // bias scaling; 0 disables the bias term
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

/// Fixed random weights of a leaky-integrator ESN with output feedback.
/// Immutable after construction; safe to share read-only across workers.
struct Reservoir {
    Matrix w_in;   // n_x x n_u, entries in {0, +delta_in, -delta_in}
    Matrix w;      // n_x x n_x, rescaled to spectral radius rho_star
    Matrix w_fb;   // n_x x n_y, uniform in [-delta_fb, delta_fb]
    Vector w_b;    // n_x bias, uniform in [-delta_b, delta_b] (zero if disabled)
    double alpha = 1.0;
    ReservoirConfig cfg;  // echoed for serialization / reproducibility

    int n_x() const { return static_cast<int>(w.rows()); }
    int n_u() const { return static_cast<int>(w_in.cols()); }
    int n_y() const { return static_cast<int>(w_fb.cols()); }
};

/// Trainable linear readout y = w_out x.
struct Readout {
    Matrix w_out;  // n_y x n_x
};

/// Column-per-step collection of reservoir states.
struct StateMatrix {
    enum class Role { teacher_forced, free_run };
    Matrix cols;  // n_x x T
    Role role = Role::teacher_forced;

    int steps() const { return static_cast<int>(cols.cols()); }
};

/// Spectral radius of a general square matrix: block power iteration
/// (small orthonormal subspace, so complex-conjugate dominant pairs still
/// converge) to 1e-12 relative, with a dense eigenvalue fallback for
/// n <= 512. Deterministic.
double spectral_radius(const Matrix& m);

/// Draws the fixed weights: w_in entries 0 / +delta_in / -delta_in with
/// probabilities 0.5 / 0.25 / 0.25, w uniform on [-1, 1] rescaled to
/// rho_star, w_fb uniform on [-delta_fb, delta_fb], optional bias.
/// Throws NumericsError if the raw recurrent matrix has numerically zero
/// spectral radius.
Reservoir init_reservoir(const ReservoirConfig& cfg);

/// One leaky-integrator update:
///   (1 - alpha) x + alpha tanh(w_in u + w x + w_fb y_fb + w_b).
/// Pure function; throws on non-finite inputs.
Vector update_state(const Reservoir& res, const Vector& x, const Vector& u, const Vector& y_fb);

inline Vector readout(const Readout& ro, const Vector& x) { return ro.w_out * x; }

/// Drives the reservoir with the desired outputs fed back: column n is the
/// state after consuming input row n with feedback target row n-1. The first
/// update uses x0 and y_init; passing an empty y_init selects the first
/// target row (the toolkit's convention for step-0 feedback).
StateMatrix run_teacher_forced(const Reservoir& res,
                               const Matrix& inputs,   // T x n_u
                               const Matrix& targets,  // T x n_y
                               const Vector& x0,
                               const Vector& y_init = Vector());

struct FreeRunResult {
    StateMatrix states;
    Matrix outputs;  // T x n_y
};

/// Closed-loop rollout: the readout of each state is fed back at the next
/// step. Throws DivergenceError (with the step) when any |output| exceeds
/// `blowup`.
FreeRunResult run_free(const Reservoir& res, const Readout& ro,
                       const Matrix& inputs,  // T x n_u
                       const Vector& x0, const Vector& y0,
                       double blowup = 1e6);

/// Teacher-forced state after n_warm steps from the zero state.
Vector warmup(const Reservoir& res, const Matrix& inputs, const Matrix& targets, int n_warm);

}  // namespace piesn
