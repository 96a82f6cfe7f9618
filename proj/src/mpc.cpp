#include "piesn/mpc.hpp"

#include "piesn/simulate.hpp"

#include <cmath>
#include <limits>

namespace piesn {

void MpcConfig::validate(int n_u, int n_yc) const {
    if (horizon_u < 1 || horizon_u > horizon_y)
        throw ConfigError("mpc: need 1 <= horizon_u <= horizon_y");
    if (!(b_filter >= 0.0 && b_filter < 1.0)) throw ConfigError("mpc: b must lie in [0,1)");
    if (q_weight.size() != n_yc || (q_weight.array() < 0.0).any())
        throw ConfigError("mpc: q_weight must be >= 0, one per controlled output");
    if (r_weight.size() != n_u || (r_weight.array() <= 0.0).any())
        throw ConfigError("mpc: r_weight must be > 0, one per input");
    if (u_min.size() != n_u || u_max.size() != n_u || (u_min.array() > u_max.array()).any())
        throw ConfigError("mpc: input bounds malformed");
    if (y_min.size() != y_max.size() || (y_min.size() != 0 && y_min.size() != n_yc))
        throw ConfigError("mpc: output bounds malformed");
}

PnmpcController::PnmpcController(Reservoir res, Readout ro, MpcConfig cfg)
    : res_(std::move(res)), ro_(std::move(ro)), cfg_(std::move(cfg)) {
    if (cfg_.controlled.empty())
        for (int i = 0; i < res_.n_y(); ++i) cfg_.controlled.push_back(i);
    const int n_yc = static_cast<int>(cfg_.controlled.size());
    cfg_.validate(res_.n_u(), n_yc);
    c_sel_ = Matrix::Zero(n_yc, res_.n_y());
    for (int i = 0; i < n_yc; ++i) {
        if (cfg_.controlled[i] < 0 || cfg_.controlled[i] >= res_.n_y())
            throw ConfigError("mpc: controlled index out of range");
        c_sel_(i, cfg_.controlled[i]) = 1.0;
    }
}

Vector PnmpcController::controlled_of(const Vector& y_full) const { return c_sel_ * y_full; }

void PnmpcController::reset(const Matrix& inputs, const Matrix& measured, const Vector& u0) {
    const int n_yc = static_cast<int>(cfg_.controlled.size());
    state_.x = Vector::Zero(res_.n_x());
    if (inputs.rows() > 0) {
        const StateMatrix sm = run_teacher_forced(res_, inputs, measured, state_.x);
        state_.x = sm.cols.col(sm.steps() - 1);
    }
    state_.u_prev = u0;
    state_.n_acc = Vector::Zero(n_yc);
    state_.dn_prev = Vector::Zero(n_yc);
    state_.y_pred1 = Vector::Zero(n_yc);
    state_.has_pred = false;
}

FreeResponse PnmpcController::free_response(const Vector& y_measured) const {
    const int ny = cfg_.horizon_y;
    const int n_yc = static_cast<int>(cfg_.controlled.size());
    FreeResponse fr;
    fr.stacked.resize(ny * n_yc);
    fr.states.resize(res_.n_x(), ny);
    fr.preact.resize(res_.n_x(), ny);

    // Filter update from the newest measurement:
    //   dn[k] = (1-b)(y_m[k] - yhat[k|k-1]) + b dn[k-1],  n[k] = n[k-1] + dn[k].
    const Vector y_mc = controlled_of(y_measured);
    Vector dn = Vector::Zero(n_yc);
    if (state_.has_pred)
        dn = (1.0 - cfg_.b_filter) * (y_mc - state_.y_pred1) + cfg_.b_filter * state_.dn_prev;
    fr.dn_now = dn;
    fr.n_now = state_.n_acc + dn;

    // Roll the model forward holding u[k-1]; the first step feeds back the
    // measurement, later steps the model's own output.
    Vector x = state_.x;
    Vector fb = y_measured;
    for (int i = 0; i < ny; ++i) {
        const Vector pre = res_.w_in * state_.u_prev + res_.w * x + res_.w_fb * fb + res_.w_b;
        x = (1.0 - res_.alpha) * x + res_.alpha * pre.array().tanh().matrix();
        fr.preact.col(i) = pre;
        fr.states.col(i) = x;
        const Vector y = ro_.w_out * x;
        if (!all_finite(y) || y.cwiseAbs().maxCoeff() > 1e9)
            throw DivergenceError("mpc free response diverged at horizon step " + std::to_string(i), i);
        fr.stacked.segment(i * n_yc, n_yc) = controlled_of(y) + fr.n_now;
        fb = y;
    }
    return fr;
}

Matrix PnmpcController::sensitivity_matrix(const FreeResponse& fr) const {
    const int ny = cfg_.horizon_y;
    const int nu = cfg_.horizon_u;
    const int n_in = res_.n_u();
    const int n_yc = static_cast<int>(cfg_.controlled.size());
    const Matrix cw = c_sel_ * ro_.w_out;  // controlled outputs of the state

    Matrix g = Matrix::Zero(ny * n_yc, nu * n_in);
    // One recursion per control-move block j: S[i] = d x[k+i] / d du[k+j].
    for (int j = 0; j < nu; ++j) {
        Matrix s = Matrix::Zero(res_.n_x(), n_in);
        for (int i = 0; i < ny; ++i) {
            // d(tanh(pre))/d(du_j): W S + W_fb W_out S (model feedback from
            // step 2 on; the first feedback is the measurement) + W_in 1[j<=i].
            const Eigen::ArrayXd sech2 = 1.0 - fr.preact.col(i).array().tanh().square();
            Matrix inner = res_.w * s;
            if (i > 0) inner += res_.w_fb * (ro_.w_out * s);
            if (i >= j) inner += res_.w_in;
            s = (1.0 - res_.alpha) * s + res_.alpha * (inner.array().colwise() * sech2).matrix();
            if (i >= j) g.block(i * n_yc, j * n_in, n_yc, n_in) = cw * s;
        }
    }
    return g;
}

QpProblem build_qp(const Matrix& g, const Vector& f, const Vector& y_ref_stacked,
                   const Vector& u_prev, const MpcConfig& cfg) {
    const int nu = cfg.horizon_u;
    const int n_in = static_cast<int>(cfg.r_weight.size());
    const int ny = cfg.horizon_y;
    const int n_yc = static_cast<int>(cfg.q_weight.size());
    if (g.rows() != ny * n_yc || g.cols() != nu * n_in) throw ConfigError("build_qp: G shape mismatch");
    if (f.size() != g.rows() || y_ref_stacked.size() != g.rows())
        throw ConfigError("build_qp: F / reference shape mismatch");

    Vector q_diag(ny * n_yc), r_diag(nu * n_in);
    for (int i = 0; i < ny; ++i) q_diag.segment(i * n_yc, n_yc) = cfg.q_weight;
    for (int i = 0; i < nu; ++i) r_diag.segment(i * n_in, n_in) = cfg.r_weight;

    QpProblem qp;
    qp.h = g.transpose() * q_diag.asDiagonal() * g;
    qp.h.diagonal() += r_diag;
    qp.h = 0.5 * (qp.h + qp.h.transpose());  // strip asymmetric roundoff
    qp.c = -2.0 * g.transpose() * (q_diag.asDiagonal() * (y_ref_stacked - f));
    qp.soft_penalty = cfg.soft_penalty;

    // Hard input rows: the block-summed increments keep u within bounds.
    Matrix t = Matrix::Zero(nu * n_in, nu * n_in);
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j <= i; ++j)
            t.block(i * n_in, j * n_in, n_in, n_in) = Matrix::Identity(n_in, n_in);

    const bool with_y = cfg.y_min.size() > 0;
    const int rows = 2 * nu * n_in + (with_y ? 2 * ny * n_yc : 0);
    qp.a = Matrix::Zero(rows, nu * n_in);
    qp.b = Vector::Zero(rows);
    qp.soft.assign(rows, false);

    int at = 0;
    for (int i = 0; i < nu; ++i) {
        qp.a.middleRows(at, n_in) = t.middleRows(i * n_in, n_in);
        qp.b.segment(at, n_in) = cfg.u_max - u_prev;
        at += n_in;
        qp.a.middleRows(at, n_in) = -t.middleRows(i * n_in, n_in);
        qp.b.segment(at, n_in) = u_prev - cfg.u_min;
        at += n_in;
    }
    if (with_y) {
        for (int i = 0; i < ny; ++i) {
            qp.a.middleRows(at, n_yc) = g.middleRows(i * n_yc, n_yc);
            qp.b.segment(at, n_yc) = cfg.y_max - f.segment(i * n_yc, n_yc);
            for (int r = 0; r < n_yc; ++r) qp.soft[at + r] = true;
            at += n_yc;
            qp.a.middleRows(at, n_yc) = -g.middleRows(i * n_yc, n_yc);
            qp.b.segment(at, n_yc) = f.segment(i * n_yc, n_yc) - cfg.y_min;
            for (int r = 0; r < n_yc; ++r) qp.soft[at + r] = true;
            at += n_yc;
        }
    }
    return qp;
}

Vector PnmpcController::step(const Vector& y_measured, const Matrix& y_ref) {
    const int ny = cfg_.horizon_y;
    const int n_in = res_.n_u();
    const int n_yc = static_cast<int>(cfg_.controlled.size());
    if (y_ref.rows() != ny || y_ref.cols() != n_yc)
        throw ConfigError("mpc step: reference window must be horizon_y x controlled outputs");

    last_ = MpcStepInfo{};
    const FreeResponse fr = free_response(y_measured);
    const Matrix g = sensitivity_matrix(fr);

    Vector ref(ny * n_yc);
    for (int i = 0; i < ny; ++i) ref.segment(i * n_yc, n_yc) = y_ref.row(i).transpose();

    Vector u = state_.u_prev;
    Vector du = Vector::Zero(n_in);
    try {
        const QpProblem qp = build_qp(g, fr.stacked, ref, state_.u_prev, cfg_);
        const QpSolution sol = solve_qp(qp, cfg_.qp);
        du = sol.x.head(n_in);
        u = (state_.u_prev + du).cwiseMax(cfg_.u_min).cwiseMin(cfg_.u_max);
        last_.kkt_residual = sol.kkt_residual;
        last_.relaxed = sol.relaxed;
    } catch (const Error&) {
        // Controller fault: hold the previous input.
        last_.qp_fault = true;
        u = state_.u_prev;
        du.setZero();
    }

    last_.u = u;
    last_.delta_u = du;
    last_.free_response = fr.stacked;
    last_.sensitivity = g;

    // Advance the synchronized model state with the applied input and the
    // measured output (teacher forcing), and record the one-step prediction
    // the next filter update will compare against.
    state_.x = update_state(res_, state_.x, u, y_measured);
    state_.y_pred1 = controlled_of(ro_.w_out * state_.x) + fr.n_now;
    state_.has_pred = true;
    state_.n_acc = fr.n_now;
    state_.dn_prev = fr.dn_now;
    state_.u_prev = u;
    return u;
}

ClosedLoopResult closed_loop(const OdeSystem& plant, const Vector& y0, PnmpcController& ctrl,
                             const Matrix& refs, const DisturbanceSpec& dist, int steps, double dt) {
    const int n_yc = static_cast<int>(ctrl.config().controlled.size());
    const int n_in = plant.dim_u();
    const int ny = ctrl.config().horizon_y;
    if (refs.cols() != n_yc) throw ConfigError("closed_loop: reference has wrong output count");
    if (refs.rows() < 1) throw ConfigError("closed_loop: empty reference");

    ClosedLoopResult out;
    out.log.resize(steps, 1 + 3 * n_yc + 2 * n_in + 1);
    out.log_header.push_back("time");
    for (int i = 0; i < n_yc; ++i) out.log_header.push_back("ref" + std::to_string(i + 1));
    for (int i = 0; i < n_yc; ++i) out.log_header.push_back("y" + std::to_string(i + 1));
    for (int i = 0; i < n_yc; ++i) out.log_header.push_back("err" + std::to_string(i + 1));
    for (int i = 0; i < n_in; ++i) out.log_header.push_back("u" + std::to_string(i + 1));
    for (int i = 0; i < n_in; ++i) out.log_header.push_back("du" + std::to_string(i + 1));
    out.log_header.push_back("iae");

    Vector y = y0;  // plant state
    const auto& sel = ctrl.config().controlled;

    for (int k = 0; k < steps; ++k) {
        if (dist.at_step == k && dist.state_offset.size() == y.size()) y += dist.state_offset;
        Vector y_meas = y;
        if (dist.at_step >= 0 && k >= dist.at_step && dist.output_offset.size() == y.size())
            y_meas += dist.output_offset;
        if (!all_finite(y_meas))
            throw DivergenceError("closed_loop: plant diverged at step " + std::to_string(k), k);

        Matrix window(ny, n_yc);
        for (int i = 0; i < ny; ++i) {
            const int row = std::min(k + i, static_cast<int>(refs.rows()) - 1);
            window.row(i) = refs.row(row);
        }

        const Vector u = ctrl.step(y_meas, window);
        out.kkt.push_back(ctrl.last().kkt_residual);
        out.max_kkt = std::max(out.max_kkt, ctrl.last().kkt_residual);
        out.relaxed_any = out.relaxed_any || ctrl.last().relaxed;

        double err_abs = 0.0;
        out.log(k, 0) = k * dt;
        for (int i = 0; i < n_yc; ++i) {
            const double yc = y_meas(sel[i]);
            const double e = refs.row(std::min(k, static_cast<int>(refs.rows()) - 1))(i) - yc;
            err_abs += std::abs(e);
            out.log(k, 1 + i) = window(0, i);
            out.log(k, 1 + n_yc + i) = yc;
            out.log(k, 1 + 2 * n_yc + i) = e;
        }
        out.iae += err_abs * dt;
        for (int i = 0; i < n_in; ++i) {
            out.log(k, 1 + 3 * n_yc + i) = u(i);
            out.log(k, 1 + 3 * n_yc + n_in + i) = ctrl.last().delta_u(i);
        }
        out.log(k, 1 + 3 * n_yc + 2 * n_in) = out.iae;

        // Plant advances one step under the applied input.
        y = plant.clamp_state(y + dt * plant.rhs(y, u));
    }
    return out;
}

}  // namespace piesn
