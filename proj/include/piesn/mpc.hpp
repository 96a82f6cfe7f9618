#pragma once

#include "piesn/common.hpp"
#include "piesn/qp.hpp"
#include "piesn/reservoir.hpp"
#include "piesn/systems.hpp"

#include <optional>
#include <vector>

namespace piesn {

/// Practical NMPC settings. `controlled` selects which model outputs are
/// referenced/constrained (all outputs feed back into the reservoir either
/// way). Input bounds are hard; output bounds are soft (slack-relaxed when
/// transiently infeasible).
struct MpcConfig {
    int horizon_y = 10;  // prediction horizon N_y
    int horizon_u = 3;   // control horizon N_u, 1 <= N_u <= N_y
    Vector q_weight;     // per controlled output (diagonal of Q)
    Vector r_weight;     // per input (diagonal of R), > 0
    double b_filter = 0.6;  // disturbance filter coefficient, [0, 1)
    Vector u_min, u_max;    // per input
    Vector y_min, y_max;    // per controlled output; empty => unconstrained
    std::vector<int> controlled;  // model output indices; empty => all
    double soft_penalty = 1e6;
    HildrethConfig qp;

    void validate(int n_u, int n_y) const;
};

/// Controller-side model state: synchronized reservoir state, last applied
/// input, and the disturbance-filter accumulators.
struct MpcState {
    Vector x;         // reservoir state after consuming u_prev
    Vector u_prev;    // u[k-1]
    Vector n_acc;     // n[k-1], per controlled output
    Vector dn_prev;   // delta n[k-1]
    Vector y_pred1;   // one-step-ahead prediction made last step (+ n)
    bool has_pred = false;
};

struct MpcStepInfo {
    Vector u;             // applied input
    Vector delta_u;       // first increment before clipping
    Vector free_response; // stacked F (horizon_y * n_yc)
    Matrix sensitivity;   // G
    double kkt_residual = 0.0;
    bool relaxed = false;
    bool qp_fault = false;  // QP failed; previous input held
};

/// Free response + filtered disturbance correction: rolls the model forward
/// holding u[k-1], adds n[k] to every block. Returns the stacked prediction
/// and records the rollout needed by the sensitivity recursion.
struct FreeResponse {
    Vector stacked;        // horizon_y * n_yc
    Matrix states;         // n_x x horizon_y (free rollout states)
    Matrix preact;         // n_x x horizon_y (pre-activations a[i])
    Vector n_now;          // filter output n[k]
    Vector dn_now;
};

class PnmpcController {
public:
    PnmpcController(Reservoir res, Readout ro, MpcConfig cfg);

    /// Primes the model state: teacher-forces the supplied history so the
    /// reservoir is synchronized with the plant, and seeds the filter at
    /// zero. `inputs`/`measured` are time-major histories ending at the
    /// current step; u0 is the input currently being applied.
    void reset(const Matrix& inputs, const Matrix& measured, const Vector& u0);

    /// One receding-horizon step. `y_measured` is the full model-output
    /// measurement at the current step; `y_ref` holds the next horizon_y
    /// rows of controlled-output references. Applies the first increment,
    /// clips to the input bounds, teacher-forces the measurement into the
    /// model state, and returns the applied input.
    Vector step(const Vector& y_measured, const Matrix& y_ref);

    const MpcStepInfo& last() const { return last_; }
    const MpcState& state() const { return state_; }
    const MpcConfig& config() const { return cfg_; }
    const Reservoir& reservoir() const { return res_; }
    const Readout& readout_layer() const { return ro_; }

    FreeResponse free_response(const Vector& y_measured) const;
    Matrix sensitivity_matrix(const FreeResponse& fr) const;

private:
    Vector controlled_of(const Vector& y_full) const;

    Reservoir res_;
    Readout ro_;
    MpcConfig cfg_;
    Matrix c_sel_;  // n_yc x n_y selection
    MpcState state_;
    MpcStepInfo last_;
};

/// H = G^T Q G + R, c = -2 G^T Q (y_ref - F); input rows (hard) bound the
/// block-summed increments, output rows (soft) bound G dU by the shifted
/// limits.
QpProblem build_qp(const Matrix& g, const Vector& f, const Vector& y_ref_stacked,
                   const Vector& u_prev, const MpcConfig& cfg);

struct DisturbanceSpec {
    int at_step = -1;       // -1 disables
    Vector output_offset;   // added to plant outputs from at_step on
    Vector state_offset;    // added to the plant state once, at at_step
};

struct ClosedLoopResult {
    Matrix log;  // per step: time, refs, measured (controlled), inputs, increments, iae
    std::vector<std::string> log_header;
    double iae = 0.0;
    double max_kkt = 0.0;
    bool relaxed_any = false;
    std::vector<double> kkt;  // per step
};

/// Simulates the plant under the controller. References are time-major
/// (steps x n_yc); the last row is held if the horizon extends past the end.
/// IAE = sum_k sum_i |ref_i[k] - y_i[k]| dt over controlled outputs.
ClosedLoopResult closed_loop(const OdeSystem& plant, const Vector& y0, PnmpcController& ctrl,
                             const Matrix& refs, const DisturbanceSpec& dist, int steps, double dt);

}  // namespace piesn
