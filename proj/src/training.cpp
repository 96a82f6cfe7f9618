#include "piesn/training.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace piesn {

Readout ridge_fit(const Matrix& states, const Matrix& targets, double gamma) {
    if (gamma < 0.0) throw ConfigError("ridge: gamma must be >= 0");
    const int steps = static_cast<int>(states.cols());
    if (steps < 1 || targets.rows() != steps)
        throw ConfigError("ridge: states/targets length mismatch");
    if (!all_finite(states) || !all_finite(targets))
        throw NumericsError("ridge: non-finite design matrix");

    Matrix normal = states * states.transpose();
    normal.diagonal().array() += gamma;
    Eigen::LDLT<Matrix> solver(normal);
    if (solver.info() != Eigen::Success || !solver.isPositive())
        throw NumericsError("ridge: normal matrix numerically singular; increase gamma");
    const Vector diag = solver.vectorD().cwiseAbs();
    if (diag.maxCoeff() <= 0.0 || diag.minCoeff() <= 1e-14 * diag.maxCoeff())
        throw NumericsError("ridge: normal matrix numerically singular; increase gamma");
    // (X X^T + g I) W^T = X Yhat
    const Matrix xy = states * targets;
    Matrix wt = solver.solve(xy);
    const double rel_err = (normal * wt - xy).norm() / std::max(1e-300, xy.norm());
    if (!wt.allFinite() || rel_err > 1e-6)
        throw NumericsError("ridge: solve failed (residual " + std::to_string(rel_err) +
                            "); increase gamma");
    Readout ro;
    ro.w_out = wt.transpose();
    return ro;
}

double data_loss(const Matrix& y, const Matrix& yhat) {
    if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
        throw ConfigError("data_loss: shape mismatch");
    const double n = static_cast<double>(y.rows()) * static_cast<double>(y.cols());
    return (y - yhat).squaredNorm() / n;
}

Matrix physics_residual(const OdeSystem& sys, const Matrix& outputs, const Matrix& inputs_phys,
                        double dt, const OutputScaling& scaling) {
    const int n_f = static_cast<int>(outputs.cols());
    if (n_f < 2) throw ConfigError("physics_residual: need at least two collocation states");
    if (inputs_phys.rows() < n_f) throw ConfigError("physics_residual: inputs shorter than outputs");
    if (outputs.rows() != sys.dim_y())
        throw ConfigError("physics_residual: output dimension does not match the system");

    const Matrix y_phys = scaling.to_physical(outputs);
    Matrix f(outputs.rows(), n_f - 1);
    for (int n = 0; n + 1 < n_f; ++n) {
        const Vector y = y_phys.col(n);
        const Vector rhs = sys.rhs(y, inputs_phys.row(n).transpose());
        f.col(n) = y_phys.col(n + 1) - (y + rhs * dt);
    }
    return f;
}

double physics_loss(const Matrix& residual) {
    if (residual.size() == 0) throw ConfigError("physics_loss: empty residual");
    // Divisor is the collocation state count N_f = cols + 1; the sum runs
    // over the N_f - 1 formed transitions.
    const double n_f = static_cast<double>(residual.cols()) + 1.0;
    return residual.squaredNorm() / (static_cast<double>(residual.rows()) * n_f);
}

double adaptive_total_loss(double j_data, double j_phy, const AdaptiveLossState& s) {
    return 0.5 * std::exp(-s.s_d) * j_data + 0.5 * std::exp(-s.s_f) * j_phy + s.s_d + s.s_f;
}

LossEval loss_gradient(const PiLossInputs& in, const Matrix& w_out, const AdaptiveLossState& s,
                       BalanceMode mode) {
    LossEval out;
    const double n_y = static_cast<double>(w_out.rows());
    const double n_t = static_cast<double>(in.x_t.cols());
    const double n_f_states = static_cast<double>(in.x_f.cols());

    // Data term.
    const Matrix y_t = w_out * in.x_t;
    const Matrix r_t = y_t - in.yhat_t;
    out.j_data = r_t.squaredNorm() / (n_y * n_t);
    const Matrix grad_data = (2.0 / (n_y * n_t)) * r_t * in.x_t.transpose();

    // Physics term on the frozen free-run states.
    const Matrix y_f = w_out * in.x_f;
    const Matrix f = physics_residual(*in.sys, y_f, in.u_f_phys, in.dt, in.scaling);
    out.j_physics = f.squaredNorm() / (n_y * n_f_states);

    const int cols = static_cast<int>(f.cols());
    Vector scale = in.scaling.identity() ? Vector::Ones(w_out.rows()) : in.scaling.scale;
    const Matrix y_phys = in.scaling.to_physical(y_f);
    // sum_n (J_n^T F_n) x_n^T, with J_n the system Jacobian at column n.
    Matrix jtf(w_out.rows(), cols);
    for (int n = 0; n < cols; ++n) {
        const Matrix jac = in.sys->jacobian_y(y_phys.col(n), in.u_f_phys.row(n).transpose());
        jtf.col(n) = jac.transpose() * f.col(n);
    }
    const Matrix dx = in.x_f.rightCols(cols) - in.x_f.leftCols(cols);
    Matrix grad_phy = f * dx.transpose() - in.dt * (jtf * in.x_f.leftCols(cols).transpose());
    grad_phy = (2.0 / (n_y * n_f_states)) * scale.asDiagonal() * grad_phy;

    if (mode == BalanceMode::fixed) {
        out.total = total_loss_fixed(out.j_data, out.j_physics, in.lambda_data, in.lambda_phy);
        out.grad_w = in.lambda_data * grad_data + in.lambda_phy * grad_phy;
        out.grad_sd = 0.0;
        out.grad_sf = 0.0;
    } else {
        const double wd = 0.5 * std::exp(-s.s_d);
        const double wf = 0.5 * std::exp(-s.s_f);
        out.total = wd * out.j_data + wf * out.j_physics + s.s_d + s.s_f;
        out.grad_w = wd * grad_data + wf * grad_phy;
        out.grad_sd = -wd * out.j_data + 1.0;
        out.grad_sf = -wf * out.j_physics + 1.0;
    }
    return out;
}

void PiTrainConfig::validate() const {
    if (m_outer < 1 || k_inner < 1) throw ConfigError("training: m_outer and k_inner must be >= 1");
    if (ridge.gamma < 0.0) throw ConfigError("training: ridge gamma must be >= 0");
    if (mode == BalanceMode::fixed && (lambda_data <= 0.0 || lambda_phy < 0.0))
        throw ConfigError("training: fixed-mode lambdas must be positive");
    if (blowup <= 0.0) throw ConfigError("training: blow-up bound must be positive");
    if (max_retries < 0) throw ConfigError("training: max_retries must be >= 0");
}

void TrainReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "iteration,j_data,j_physics,total,best_total,s_d,s_f,colloc_mse,test_mse\n";
    for (size_t i = 0; i < total.size(); ++i) {
        out << i << ',' << format_double(j_data[i]) << ',' << format_double(j_physics[i]) << ','
            << format_double(total[i]) << ',' << format_double(best_total[i]) << ','
            << format_double(s_d[i]) << ',' << format_double(s_f[i]) << ','
            << format_double(colloc_mse[i]) << ',' << format_double(test_mse[i]) << '\n';
    }
}

namespace {

struct PackedParams {
    static Vector pack(const Matrix& w, const AdaptiveLossState& s, bool with_s) {
        Vector p(w.size() + (with_s ? 2 : 0));
        p.head(w.size()) = Eigen::Map<const Vector>(w.data(), w.size());
        if (with_s) {
            p(w.size()) = s.s_d;
            p(w.size() + 1) = s.s_f;
        }
        return p;
    }
    static void unpack(const Vector& p, Matrix& w, AdaptiveLossState& s, bool with_s) {
        Eigen::Map<const Matrix> wm(p.data(), w.rows(), w.cols());
        w = wm;
        if (with_s) {
            s.s_d = p(w.size());
            s.s_f = p(w.size() + 1);
        }
    }
};

}  // namespace

TrainResult train_pi_esn(const Reservoir& res, const TrainView& view, const OdeSystem& sys,
                         const PiTrainConfig& cfg, const EvalHook& eval) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    const int n_t = static_cast<int>(view.train_inputs.rows());
    const int n_f = static_cast<int>(view.colloc_inputs.rows());
    if (n_t < 1) throw ConfigError("training: no labeled samples");

    TrainResult result;

    // Stage 1: teacher-forced states + ridge pretraining.
    const StateMatrix x_t =
        run_teacher_forced(res, view.train_inputs, view.train_targets, Vector::Zero(res.n_x()));
    const Matrix yhat = view.train_targets.transpose();
    result.pretrained = ridge_fit(x_t.cols, view.train_targets, cfg.ridge.gamma);
    result.report.pretrain_j_data = data_loss(result.pretrained.w_out * x_t.cols, yhat);

    if (cfg.skip_physics) {
        result.readout = result.pretrained;
        result.s = AdaptiveLossState{cfg.s_init, cfg.s_init};
        result.report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return result;
    }
    if (n_f < 2) throw ConfigError("training: physics refinement needs >= 2 collocation samples");

    // Stage 2: Algorithm-1 refinement.
    const bool adaptive = cfg.mode == BalanceMode::adaptive;
    Matrix w = result.pretrained.w_out;
    AdaptiveLossState s{cfg.s_init, cfg.s_init};

    const Vector x_last = x_t.cols.col(n_t - 1);
    const Vector y_last = view.train_targets.row(n_t - 1).transpose();

    PiLossInputs inputs;
    inputs.x_t = x_t.cols;
    inputs.yhat_t = yhat;
    inputs.u_f_phys = view.colloc_inputs_phys;
    inputs.sys = &sys;
    inputs.dt = view.dt;
    inputs.scaling = view.scaling;
    inputs.lambda_data = cfg.lambda_data;
    inputs.lambda_phy = cfg.lambda_phy;

    double best_total = std::numeric_limits<double>::infinity();
    Matrix best_w = w;
    AdaptiveLossState best_s = s;
    TrainReport& rep = result.report;

    double step_scale = 1.0;
    int retries_left = cfg.max_retries;
    bool have_snapshot = false;
    Matrix snap_w;
    AdaptiveLossState snap_s;

    // The first-order optimizer keeps its moments across X_f refreshes (one
    // continuous optimization of a slowly moving objective); quasi-Newton
    // memory is rebuilt per refresh since stale curvature pairs are invalid
    // after the matrices change.
    AdamOptimizer adam(cfg.adam);
    const int n_params = static_cast<int>(w.size()) + (adaptive ? 2 : 0);
    adam.reset(n_params);

    // Candidate selection. Primary signal: free-run tracking error over the
    // trailing n_val labeled rows (these are training labels), which sees
    // the rollout quality the one-step physics surrogate cannot. Fallback
    // without a validation slice: the unweighted honest loss sum, which
    // stays comparable while s drifts (the adaptive total's +s_d+s_f term
    // would otherwise always prefer the latest iterate).
    const int n_val = std::max(0, std::min(view.n_val, n_t - 1));
    Matrix val_inputs, val_targets;
    Vector val_x0, val_y0;
    if (n_val > 0) {
        val_inputs = view.train_inputs.bottomRows(n_val);
        val_targets = view.train_targets.bottomRows(n_val);
        const int at = n_t - n_val;  // selection rollout starts here
        val_x0 = at > 0 ? Vector(x_t.cols.col(at - 1)) : Vector(Vector::Zero(res.n_x()));
        val_y0 = at > 0 ? Vector(view.train_targets.row(at - 1).transpose())
                        : Vector(view.train_targets.row(0).transpose());
    }
    auto selection_score = [&](const Matrix& wc, const LossEval& ev) {
        if (n_val == 0) return ev.j_data + ev.j_physics;
        try {
            const FreeRunResult fr = run_free(res, Readout{wc}, val_inputs, val_x0, val_y0, cfg.blowup);
            return (fr.outputs - val_targets).squaredNorm() /
                   (static_cast<double>(val_targets.rows()) * val_targets.cols());
        } catch (const DivergenceError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    auto consider = [&](const Matrix& wc, const AdaptiveLossState& sc, const LossEval& ev) {
        const double score = selection_score(wc, ev);
        if (score < best_total) {
            best_total = score;
            best_w = wc;
            best_s = sc;
        }
    };

    int outer = 0;
    while (outer < cfg.m_outer) {
        // Regenerate X_f with the current readout; the rollout starts from
        // the last teacher-forced state and the last label.
        try {
            const FreeRunResult fr =
                run_free(res, Readout{w}, view.colloc_inputs, x_last, y_last, cfg.blowup);
            inputs.x_f = fr.states.cols;
        } catch (const DivergenceError& e) {
            if (!have_snapshot || retries_left <= 0)
                throw InstabilityError(
                    "training unstable: collocation rollout diverged at outer iteration " +
                    std::to_string(outer) + " (step " + std::to_string(e.step) + "), " +
                    std::to_string(cfg.max_retries - retries_left) + " retries used");
            --retries_left;
            ++rep.retries;
            step_scale *= 0.5;
            w = snap_w;
            s = snap_s;
            adam.reset(n_params);  // the landscape jumped; moments are stale
            continue;  // retry this outer iteration from the stable iterate
        }

        const LossEval stash0 = loss_gradient(inputs, w, s, cfg.mode);
        // The pretrained start is not a refinement product; candidates are
        // scored from the first refreshed iterate on.
        if (outer > 0) consider(w, s, stash0);

        snap_w = w;
        snap_s = s;
        have_snapshot = true;
        LossEval stash = stash0;
        Objective obj = [&](const Vector& p, Vector& grad) {
            Matrix wp(w.rows(), w.cols());
            AdaptiveLossState sp = s;
            PackedParams::unpack(p, wp, sp, adaptive);
            stash = loss_gradient(inputs, wp, sp, cfg.mode);
            grad.resize(p.size());
            grad.head(wp.size()) = Eigen::Map<const Vector>(stash.grad_w.data(), stash.grad_w.size());
            if (adaptive) {
                grad(wp.size()) = stash.grad_sd;
                grad(wp.size() + 1) = stash.grad_sf;
            }
            return stash.total;
        };

        int rows_this_outer = 0;
        auto log_row = [&](const Vector& p, double total) {
            Matrix wp(w.rows(), w.cols());
            AdaptiveLossState sp = s;
            PackedParams::unpack(p, wp, sp, adaptive);
            rep.j_data.push_back(stash.j_data);
            rep.j_physics.push_back(stash.j_physics);
            rep.total.push_back(total);
            rep.best_total.push_back(best_total);
            rep.s_d.push_back(sp.s_d);
            rep.s_f.push_back(sp.s_f);
            rep.colloc_mse.push_back(std::numeric_limits<double>::quiet_NaN());
            rep.test_mse.push_back(std::numeric_limits<double>::quiet_NaN());
            ++rows_this_outer;
        };

        Vector p0 = PackedParams::pack(w, s, adaptive);
        if (cfg.optimizer == OptimizerKind::lbfgs) {
            LbfgsConfig lc = cfg.lbfgs;
            lc.step_scale *= step_scale;
            lc.max_step *= step_scale;
            const MinimizeResult mr = lbfgs_minimize(obj, p0, cfg.k_inner, lc, log_row);
            PackedParams::unpack(mr.x, w, s, adaptive);
            if (rows_this_outer == 0) log_row(mr.x, mr.f);  // converged; keep loop accounting
        } else {
            adam.config().lr = cfg.adam.lr * step_scale * std::pow(cfg.adam_lr_decay, outer);
            Vector p = p0, grad(p0.size());
            obj(p, grad);
            for (int it = 0; it < cfg.k_inner; ++it) {
                p = adam.step(p, grad);
                const double f = obj(p, grad);
                log_row(p, f);
            }
            PackedParams::unpack(p, w, s, adaptive);
        }

        if (eval) {
            const auto [colloc, test] = eval(Readout{w});
            for (int r = 0; r < rows_this_outer; ++r) {
                rep.colloc_mse[rep.colloc_mse.size() - 1 - r] = colloc;
                rep.test_mse[rep.test_mse.size() - 1 - r] = test;
            }
        }
        ++outer;
    }

    // Score the final iterate on its own rollout; a diverging candidate is
    // simply not the best.
    try {
        const FreeRunResult fr =
            run_free(res, Readout{w}, view.colloc_inputs, x_last, y_last, cfg.blowup);
        inputs.x_f = fr.states.cols;
        consider(w, s, loss_gradient(inputs, w, s, cfg.mode));
    } catch (const DivergenceError&) {
    }

    result.readout = Readout{best_w};
    result.s = best_s;
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace piesn
