#pragma once

#include "piesn/common.hpp"
#include "piesn/dataset.hpp"
#include "piesn/optimize.hpp"
#include "piesn/reservoir.hpp"
#include "piesn/systems.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace piesn {

struct RidgeConfig {
    double gamma = 1e-6;  // Tikhonov factor, >= 0
};

/// w_out = Y X^T (X X^T + gamma I)^{-1}, via an SPD solve (LDLT), never an
/// explicit inverse. `states` is n_x x T, `targets` time-major (T x n_y).
/// Throws NumericsError when the normal matrix is numerically singular
/// (gamma = 0 with rank-deficient states), suggesting gamma > 0.
Readout ridge_fit(const Matrix& states, const Matrix& targets, double gamma);

/// Mean over outputs of the mean squared residual over time; both matrices
/// are n_y x T.
double data_loss(const Matrix& y, const Matrix& yhat);

/// Explicit-Euler physics residual on a candidate trajectory:
///   F[:,n] = y[n+1] - (y[n] + N(y[n], u[n]) dt),   n = 0..N-2,
/// with y de-normalized to physical units through `scaling` first.
/// `outputs` is n_y x N (ESN domain), `inputs_phys` N x n_u physical.
Matrix physics_residual(const OdeSystem& sys, const Matrix& outputs, const Matrix& inputs_phys,
                        double dt, const OutputScaling& scaling = {});

/// Mean over outputs of sum |F|^2 / N_f, where N_f = cols(F) + 1 is the
/// collocation state count (the N_f - 1 formed transitions are summed).
double physics_loss(const Matrix& residual);

inline double total_loss_fixed(double j_data, double j_phy, double lambda_data, double lambda_phy) {
    return lambda_data * j_data + lambda_phy * j_phy;
}

/// Log-variance pair s = log(eps^2) balancing the two loss terms.
struct AdaptiveLossState {
    double s_d = 1.0;
    double s_f = 1.0;
};

/// 1/2 e^{-s_d} J_data + 1/2 e^{-s_f} J_physics + s_d + s_f.
double adaptive_total_loss(double j_data, double j_phy, const AdaptiveLossState& s);

enum class BalanceMode { fixed, adaptive };

/// Frozen quantities of one Algorithm-1 inner loop: the teacher-forced and
/// free-run state matrices are treated as constants of the optimization.
struct PiLossInputs {
    Matrix x_t;        // n_x x N_t
    Matrix yhat_t;     // n_y x N_t (ESN domain)
    Matrix x_f;        // n_x x N_f
    Matrix u_f_phys;   // N_f x n_u, physical units
    const OdeSystem* sys = nullptr;
    double dt = 1.0;
    OutputScaling scaling;
    double lambda_data = 1.0;
    double lambda_phy = 1.0;
};

struct LossEval {
    double j_data = 0.0;
    double j_physics = 0.0;
    double total = 0.0;
    Matrix grad_w;      // n_y x n_x
    double grad_sd = 0.0;
    double grad_sf = 0.0;
};

/// Analytic gradient of the (fixed or adaptive) total loss with respect to
/// w_out and, in adaptive mode, s_d and s_f. No backpropagation through the
/// reservoir recurrence: both state matrices are constants, so the physics
/// chain rule reduces to outer products of the residual with the state
/// columns plus a dt-scaled Jacobian term.
LossEval loss_gradient(const PiLossInputs& in, const Matrix& w_out, const AdaptiveLossState& s,
                       BalanceMode mode);

enum class OptimizerKind { lbfgs, adam };

struct PiTrainConfig {
    RidgeConfig ridge;
    int m_outer = 50;   // X_f refreshes
    int k_inner = 20;   // optimizer iterations per refresh
    BalanceMode mode = BalanceMode::adaptive;
    double lambda_data = 1.0;  // fixed mode only
    double lambda_phy = 1.0;
    OptimizerKind optimizer = OptimizerKind::lbfgs;
    AdamConfig adam;
    double adam_lr_decay = 1.0;  // per-outer-iteration multiplier (anneal to converge tightly)
    LbfgsConfig lbfgs;
    double s_init = 1.0;     // s_d = s_f at the start of refinement
    double blowup = 1e6;     // free-run divergence bound
    int max_retries = 3;     // step-halving retries on divergence
    bool skip_physics = false;  // pretraining only (plain ESN)

    void validate() const;
};

/// One row per inner iteration. Collocation/test MSE columns are refreshed
/// once per outer iteration (via the caller-supplied evaluation hook) and
/// carried forward in between; NaN when no hook is given.
struct TrainReport {
    std::vector<double> j_data, j_physics, total, s_d, s_f;
    std::vector<double> colloc_mse, test_mse;
    std::vector<double> best_total;  // running minimum, non-increasing
    double pretrain_j_data = 0.0;
    double wall_seconds = 0.0;
    int retries = 0;     // divergence reversions
    int rejections = 0;  // score-regression reversions

    void write_csv(const std::string& path) const;
};

/// Metric hook evaluated on candidate readouts; lives outside the training
/// module so withheld labels never flow through here.
using EvalHook = std::function<std::pair<double, double>(const Readout&)>;

struct TrainResult {
    Readout readout;          // best-by-total-loss iterate
    Readout pretrained;       // ridge-only baseline
    AdaptiveLossState s;
    TrainReport report;
};

/// Two-stage training: ridge pretraining on the labeled region, then M outer
/// iterations that regenerate the collocation state matrix by free-running
/// the current readout (starting from the last teacher-forced state and the
/// last label) and run K inner optimizer iterations on the frozen matrices.
/// A diverging regeneration reverts to the last stable iterate, halves the
/// optimizer step and retries up to max_retries times before throwing
/// InstabilityError.
TrainResult train_pi_esn(const Reservoir& res, const TrainView& view, const OdeSystem& sys,
                         const PiTrainConfig& cfg, const EvalHook& eval = nullptr);

}  // namespace piesn
