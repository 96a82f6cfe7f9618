#include "piesn/mpc.hpp"

#include "oracles.hpp"
#include "piesn/simulate.hpp"
#include "piesn/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace piesn;

namespace {

Reservoir tiny_reservoir(int n_x, int n_u, int n_y, std::uint64_t seed, double alpha = 1.0) {
    ReservoirConfig cfg;
    cfg.n_x = n_x;
    cfg.n_u = n_u;
    cfg.n_y = n_y;
    cfg.alpha = alpha;
    cfg.rho_star = 0.7;
    cfg.delta_in = 0.3;
    cfg.delta_fb = 0.2;
    cfg.seed = seed;
    return init_reservoir(cfg);
}

MpcConfig default_mpc(int n_u, int n_yc) {
    MpcConfig mc;
    mc.horizon_y = 6;
    mc.horizon_u = 3;
    mc.q_weight = Vector::Constant(n_yc, 5.0);
    mc.r_weight = Vector::Constant(n_u, 1.0);
    mc.b_filter = 0.6;
    mc.u_min = Vector::Constant(n_u, -10.0);
    mc.u_max = Vector::Constant(n_u, 10.0);
    return mc;
}

// Independent rollout oracle: applies the increment vector through the
// cumulative-input convention and replays the controller's prediction
// recursion (first feedback measured, then model outputs).
Vector rollout_with_moves(const Reservoir& res, const Matrix& w_out, const Vector& x0,
                          const Vector& y_meas, const Vector& u_prev, const Vector& du_stacked,
                          int horizon_y, int horizon_u, const std::vector<int>& controlled) {
    const int n_u = res.n_u();
    const int n_yc = static_cast<int>(controlled.size());
    Vector out(horizon_y * n_yc);
    Vector x = x0;
    Vector fb = y_meas;
    for (int i = 0; i < horizon_y; ++i) {
        Vector u = u_prev;
        for (int j = 0; j < horizon_u && j <= i; ++j) u += du_stacked.segment(j * n_u, n_u);
        Vector pre = res.w_in * u + res.w * x + res.w_fb * fb + res.w_b;
        for (int k = 0; k < pre.size(); ++k) pre(k) = std::tanh(pre(k));
        x = (1.0 - res.alpha) * x + res.alpha * pre;
        const Vector y = w_out * x;
        for (int c = 0; c < n_yc; ++c) out(i * n_yc + c) = y(controlled[c]);
        fb = y;
    }
    return out;
}

}  // namespace

TEST_CASE("sensitivity matrix is block lower-triangular and matches finite differences") {
    const int n_x = 20, n_u = 2, n_y = 3;
    const Reservoir res = tiny_reservoir(n_x, n_u, n_y, 9, 0.85);
    Rng rng(10);
    Matrix w_out(n_y, n_x);
    for (int i = 0; i < w_out.size(); ++i) w_out(i % n_y, i / n_y) = rng.uniform(-0.3, 0.3);

    MpcConfig mc = default_mpc(n_u, 2);
    mc.controlled = {0, 2};
    PnmpcController ctrl(res, Readout{w_out}, mc);
    Matrix hist_u(5, n_u), hist_y(5, n_y);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < n_u; ++j) hist_u(i, j) = rng.uniform(-1, 1);
        for (int j = 0; j < n_y; ++j) hist_y(i, j) = rng.uniform(-1, 1);
    }
    const Vector u0 = Vector::Constant(n_u, 0.2);
    ctrl.reset(hist_u, hist_y, u0);

    Vector y_meas(n_y);
    y_meas << 0.1, -0.2, 0.3;
    const FreeResponse fr = ctrl.free_response(y_meas);
    const Matrix g = ctrl.sensitivity_matrix(fr);

    const int n_yc = 2;
    // causality: block (i,j) with j > i vanishes
    for (int i = 0; i < mc.horizon_y; ++i)
        for (int j = i + 1; j < mc.horizon_u; ++j)
            CHECK(g.block(i * n_yc, j * n_u, n_yc, n_u).cwiseAbs().maxCoeff() == 0.0);

    // finite differences through the independent rollout oracle
    const Vector x0 = ctrl.state().x;
    const int cols = mc.horizon_u * n_u;
    const double h = 1e-6;
    for (int c = 0; c < cols; ++c) {
        Vector dup = Vector::Zero(cols), dum = Vector::Zero(cols);
        dup(c) = h;
        dum(c) = -h;
        const Vector fp = rollout_with_moves(res, w_out, x0, y_meas, u0, dup, mc.horizon_y,
                                             mc.horizon_u, mc.controlled);
        const Vector fm = rollout_with_moves(res, w_out, x0, y_meas, u0, dum, mc.horizon_y,
                                             mc.horizon_u, mc.controlled);
        const Vector fd = (fp - fm) / (2.0 * h);
        for (int r = 0; r < g.rows(); ++r) {
            const double scale = std::max({1.0, std::abs(fd(r)), std::abs(g(r, c))});
            CHECK(std::abs(fd(r) - g(r, c)) / scale < 1e-4);
        }
    }
}

TEST_CASE("decoupled reservoir gives the closed-form first block") {
    // zero W and W_fb: dy[k+1]/ddu[k] = alpha W_out diag(tanh'(a)) W_in,
    // and successive blocks approach the steady gain with ratio (1-alpha).
    const int n_x = 8, n_u = 1, n_y = 1;
    const double alpha = 0.6;
    Reservoir res = tiny_reservoir(n_x, n_u, n_y, 21, alpha);
    res.w.setZero();
    res.w_fb.setZero();
    Matrix w_out(1, n_x);
    Rng rng(22);
    for (int i = 0; i < n_x; ++i) w_out(0, i) = rng.uniform(-0.5, 0.5);

    MpcConfig mc = default_mpc(n_u, 1);
    mc.horizon_y = 5;
    mc.horizon_u = 1;
    PnmpcController ctrl(res, Readout{w_out}, mc);
    const Vector u0 = Vector::Constant(1, 0.4);
    Matrix hist_u(1, 1), hist_y(1, 1);
    hist_u << 0.4;
    hist_y << 0.0;
    ctrl.reset(hist_u, hist_y, u0);

    const Vector y_meas = Vector::Zero(1);
    const FreeResponse fr = ctrl.free_response(y_meas);
    const Matrix g = ctrl.sensitivity_matrix(fr);

    const Vector a = res.w_in * u0 + res.w_b;  // constant pre-activation
    Vector d(n_x);
    for (int i = 0; i < n_x; ++i) d(i) = 1.0 - std::tanh(a(i)) * std::tanh(a(i));
    const double first = alpha * (w_out * d.asDiagonal() * res.w_in)(0, 0);
    CHECK(g(0, 0) == doctest::Approx(first));
    // successive block differences decay by (1 - alpha)
    for (int i = 0; i + 2 < mc.horizon_y; ++i) {
        const double d1 = g(i + 1, 0) - g(i, 0);
        const double d2 = g(i + 2, 0) - g(i + 1, 0);
        CHECK(d2 == doctest::Approx((1.0 - alpha) * d1));
    }
}

TEST_CASE("build_qp closed forms") {
    MpcConfig mc = default_mpc(1, 1);
    mc.horizon_y = 1;
    mc.horizon_u = 1;
    mc.q_weight = Vector::Constant(1, 1.0);
    mc.r_weight = Vector::Constant(1, 1.0);

    Matrix g(1, 1);
    g << 1.0;
    Vector f(1), ref(1), u_prev(1);
    f << 0.0;
    ref << 1.0;
    u_prev << 0.0;
    const QpProblem qp = build_qp(g, f, ref, u_prev, mc);
    CHECK(qp.h(0, 0) == doctest::Approx(2.0));   // G^T Q G + R
    CHECK(qp.c(0) == doctest::Approx(-2.0));     // -2 G^T Q (ref - F)
    const QpSolution sol = solve_qp(qp);
    CHECK(sol.x(0) == doctest::Approx(0.5));     // min 2 du^2 - 2 du

    SUBCASE("on-reference gives zero increment") {
        const QpProblem qp0 = build_qp(g, ref, ref, u_prev, mc);
        CHECK(qp0.c.cwiseAbs().maxCoeff() == 0.0);
        CHECK(solve_qp(qp0).x.cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("zero sensitivity leaves only the R term") {
        Matrix g0 = Matrix::Zero(1, 1);
        const QpProblem qpz = build_qp(g0, f, ref, u_prev, mc);
        CHECK(qpz.h(0, 0) == doctest::Approx(1.0));
        CHECK(solve_qp(qpz).x.cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("qp respects shifted input bounds") {
    MpcConfig mc = default_mpc(1, 1);
    mc.horizon_y = 2;
    mc.horizon_u = 2;
    mc.q_weight = Vector::Constant(1, 100.0);
    mc.u_min = Vector::Constant(1, 0.0);
    mc.u_max = Vector::Constant(1, 1.0);
    Matrix g(2, 2);
    g << 1.0, 0.0, 1.0, 1.0;
    Vector f = Vector::Zero(2);
    Vector ref = Vector::Constant(2, 10.0);  // unreachable; bounds must clip
    Vector u_prev = Vector::Constant(1, 0.5);
    const QpProblem qp = build_qp(g, f, ref, u_prev, mc);
    const QpSolution sol = solve_qp(qp);
    const double u1 = u_prev(0) + sol.x(0);
    const double u2 = u1 + sol.x(1);
    CHECK(u1 <= 1.0 + 1e-8);
    CHECK(u2 <= 1.0 + 1e-8);
    CHECK(sol.kkt_residual < 1e-8);
}

TEST_CASE("disturbance filter converges to a constant offset") {
    // Model predicts zero (zero readout); the plant measures a constant d.
    // n[k] must converge to d geometrically.
    const int n_x = 6;
    Reservoir res = tiny_reservoir(n_x, 1, 1, 33);
    Matrix w_out = Matrix::Zero(1, n_x);
    MpcConfig mc = default_mpc(1, 1);
    mc.b_filter = 0.6;
    PnmpcController ctrl(res, Readout{w_out}, mc);
    Matrix hist_u(1, 1), hist_y(1, 1);
    hist_u << 0.0;
    hist_y << 0.0;
    ctrl.reset(hist_u, hist_y, Vector::Zero(1));

    const double d = 0.7;
    const Matrix refs = Matrix::Zero(mc.horizon_y, 1);
    Vector y_meas = Vector::Constant(1, d);
    // The coupled (error, dn) recursion has complex eigenvalues of modulus
    // sqrt(b): the error decays in envelope, not pointwise, so compare
    // maxima over full rotation windows.
    double w1 = 0, w2 = 0, w3 = 0;
    for (int k = 0; k < 60; ++k) {
        ctrl.step(y_meas, refs);
        const double err = std::abs(ctrl.state().n_acc(0) - d);
        if (k >= 0 && k < 20) w1 = std::max(w1, err);
        if (k >= 20 && k < 40) w2 = std::max(w2, err);
        if (k >= 40 && k < 60) w3 = std::max(w3, err);
    }
    CHECK(w2 < w1);
    CHECK(w3 < w2);
    CHECK(w3 < 1e-4);

    SUBCASE("b = 0 makes the increment the raw one-step error") {
        MpcConfig mc0 = default_mpc(1, 1);
        mc0.b_filter = 0.0;
        PnmpcController c0(res, Readout{w_out}, mc0);
        c0.reset(hist_u, hist_y, Vector::Zero(1));
        c0.step(Vector::Constant(1, 0.3), Matrix::Zero(mc0.horizon_y, 1));
        // first step: no stored prediction yet, dn = 0
        CHECK(c0.state().n_acc(0) == 0.0);
        c0.step(Vector::Constant(1, 0.3), Matrix::Zero(mc0.horizon_y, 1));
        // prediction was 0 (+ n = 0), measurement 0.3 -> dn = 0.3 exactly
        CHECK(c0.state().n_acc(0) == doctest::Approx(0.3));
    }
}

TEST_CASE("perfect model, zero disturbance: filter stays at zero") {
    // Plant IS the model: measurements equal the model's one-step
    // prediction, so the filter never accumulates.
    const int n_x = 10;
    const Reservoir res = tiny_reservoir(n_x, 1, 1, 44);
    Rng rng(45);
    Matrix w_out(1, n_x);
    for (int i = 0; i < n_x; ++i) w_out(0, i) = rng.uniform(-0.2, 0.2);
    MpcConfig mc = default_mpc(1, 1);
    PnmpcController ctrl(res, Readout{w_out}, mc);
    Matrix hist_u(1, 1), hist_y(1, 1);
    hist_u << 0.0;
    hist_y << 0.0;
    ctrl.reset(hist_u, hist_y, Vector::Zero(1));

    // plant replica
    Vector x_plant = ctrl.state().x;
    Vector y_plant = w_out * x_plant;
    const Matrix refs = Matrix::Constant(mc.horizon_y, 1, 0.1);
    for (int k = 0; k < 30; ++k) {
        const Vector u = ctrl.step(y_plant, refs);
        CHECK(std::abs(ctrl.state().n_acc(0)) < 1e-12);
        x_plant = update_state(res, x_plant, u, y_plant);
        y_plant = w_out * x_plant;
    }
}

TEST_CASE("perfect-model closed loop tracks a reachable reference") {
    // The plant is an exact ESN replica; with integral action the tracking
    // error must vanish to controller precision.
    const int n_x = 12;
    const Reservoir res = tiny_reservoir(n_x, 2, 2, 55, 0.9);
    Rng rng(56);
    Matrix w_out(2, n_x);
    for (int i = 0; i < w_out.size(); ++i) w_out(i % 2, i / 2) = rng.uniform(-0.3, 0.3);
    MpcConfig mc = default_mpc(2, 2);
    mc.horizon_y = 8;
    mc.horizon_u = 3;
    PnmpcController ctrl(res, Readout{w_out}, mc);
    Matrix hist_u(1, 2), hist_y(1, 2);
    hist_u.setZero();
    hist_y.setZero();
    ctrl.reset(hist_u, hist_y, Vector::Zero(2));

    // pick a reachable target: roll the model under a constant input
    Vector x_ss = Vector::Zero(n_x);
    const Vector u_ss = Vector::Constant(2, 0.5);
    for (int k = 0; k < 400; ++k) {
        const Vector y = w_out * x_ss;
        x_ss = update_state(res, x_ss, u_ss, y);
    }
    const Vector y_target = w_out * x_ss;

    Matrix refs(mc.horizon_y, 2);
    for (int i = 0; i < mc.horizon_y; ++i) refs.row(i) = y_target.transpose();

    Vector x_plant = Vector::Zero(n_x);
    Vector y_plant = w_out * x_plant;
    double final_err = 1.0;
    for (int k = 0; k < 250; ++k) {
        const Vector u = ctrl.step(y_plant, refs);
        x_plant = update_state(res, x_plant, u, y_plant);
        y_plant = w_out * x_plant;
        final_err = (y_plant - y_target).cwiseAbs().maxCoeff();
    }
    CHECK(final_err < 1e-3);
}

TEST_CASE("closed loop on a zero plant with zero reference has zero IAE") {
    FourTank plant;
    const Reservoir res = tiny_reservoir(8, 2, 4, 66);
    Matrix w_out = Matrix::Zero(4, 8);
    MpcConfig mc = default_mpc(2, 2);
    mc.controlled = {0, 1};
    mc.u_min = Vector::Constant(2, 0.0);
    mc.u_max = Vector::Constant(2, 5.0);
    PnmpcController ctrl(res, Readout{w_out}, mc);
    Matrix hist_u(1, 2), hist_y(1, 4);
    hist_u.setZero();
    hist_y.setZero();
    ctrl.reset(hist_u, hist_y, Vector::Zero(2));

    const Matrix refs = Matrix::Zero(50, 2);
    DisturbanceSpec none;
    const ClosedLoopResult out =
        closed_loop(plant, Vector::Zero(4), ctrl, refs, none, 50, 1.0);
    CHECK(out.iae == 0.0);
    CHECK(out.log.rows() == 50);
}

TEST_CASE("mpc config validation") {
    MpcConfig mc = default_mpc(2, 2);
    mc.horizon_u = 10;  // exceeds horizon_y
    CHECK_THROWS_AS(mc.validate(2, 2), ConfigError);
    MpcConfig mc2 = default_mpc(2, 2);
    mc2.b_filter = 1.0;
    CHECK_THROWS_AS(mc2.validate(2, 2), ConfigError);
}
