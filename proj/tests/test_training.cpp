#include "piesn/training.hpp"

#include "oracles.hpp"
#include "piesn/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace piesn;

TEST_CASE("ridge closed forms") {
    Matrix x(1, 2);
    x << 1.0, 2.0;
    Matrix y(2, 1);
    y << 2.0, 4.0;  // targets time-major

    const Readout exact = ridge_fit(x, y, 0.0);
    CHECK(exact.w_out(0, 0) == doctest::Approx(2.0));

    const Readout reg = ridge_fit(x, y, 1.0);
    CHECK(reg.w_out(0, 0) == doctest::Approx(10.0 / 6.0));
}

TEST_CASE("ridge matches the independent descent oracle on random instances") {
    Rng rng(1);
    for (int k = 0; k < 20; ++k) {
        const int n_x = rng.uniform_int(2, 8);
        const int n_y = rng.uniform_int(1, 3);
        const int steps = rng.uniform_int(n_x + 2, 20);
        Matrix x(n_x, steps), y(steps, n_y);
        for (int i = 0; i < x.size(); ++i) x(i % n_x, i / n_x) = rng.uniform(-1, 1);
        for (int i = 0; i < y.size(); ++i) y(i % steps, i / steps) = rng.uniform(-1, 1);
        const double gamma = std::pow(10.0, rng.uniform(-3, 0));

        const Readout ro = ridge_fit(x, y, gamma);
        const Matrix w_oracle = oracle::ridge_descent(x, y.transpose(), gamma);
        CHECK((ro.w_out - w_oracle).cwiseAbs().maxCoeff() < 1e-6);

        // stationarity of the normalization-consistent objective
        const double norm = static_cast<double>(n_y) * static_cast<double>(steps);
        const Matrix grad =
            (2.0 / norm) * ((ro.w_out * x - y.transpose()) * x.transpose() + gamma * ro.w_out);
        CHECK(grad.cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("ridge rejects singular systems at gamma = 0") {
    Matrix x = Matrix::Zero(3, 5);  // rank deficient
    Matrix y = Matrix::Zero(5, 1);
    y.col(0).setOnes();
    CHECK_THROWS_AS(ridge_fit(x, y, 0.0), NumericsError);
    CHECK_NOTHROW(ridge_fit(x, y, 1e-6));
}

TEST_CASE("data loss closed forms") {
    CHECK(data_loss(Matrix::Zero(2, 3), Matrix::Zero(2, 3)) == 0.0);
    CHECK(data_loss(Matrix::Ones(2, 3), Matrix::Zero(2, 3)) == doctest::Approx(1.0));
    Matrix y(2, 2), yhat = Matrix::Zero(2, 2);
    y << 1, 2, 3, 4;
    CHECK(data_loss(y, yhat) == doctest::Approx(7.5));
}

TEST_CASE("physics residual is exactly zero on an euler trajectory") {
    const VanDerPol sys;
    Rng rng(5);
    Matrix u(50, 1);
    for (int i = 0; i < 50; ++i) u(i, 0) = rng.uniform(-1, 1);
    const Matrix traj = simulate_euler(sys, Vector::Constant(2, 2.0), u, 0.03);
    const Matrix f = physics_residual(sys, traj.transpose(), u, 0.03);
    CHECK(f.cwiseAbs().maxCoeff() == 0.0);  // bit-level identity
}

TEST_CASE("physics residual of a frozen trajectory is -N dt") {
    const VanDerPol sys;
    Matrix y = Matrix::Zero(2, 5);
    y.row(0).setConstant(1.5);  // constant state, nonzero rhs
    Matrix u = Matrix::Constant(5, 1, 0.3);
    const double dt = 0.1;
    const Matrix f = physics_residual(sys, y, u, dt);
    const Vector expect = -dt * sys.rhs(y.col(0), u.row(0).transpose());
    for (int n = 0; n < f.cols(); ++n)
        CHECK((f.col(n) - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("physics residual matches elementwise re-evaluation on random outputs") {
    const VanDerPol sys;
    Rng rng(6);
    Matrix y(2, 10), u(10, 1);
    for (int i = 0; i < y.size(); ++i) y(i % 2, i / 2) = rng.uniform(-2, 2);
    for (int i = 0; i < 10; ++i) u(i, 0) = rng.uniform(-1, 1);
    const double dt = 0.05;
    const Matrix f = physics_residual(sys, y, u, dt);
    for (int n = 0; n < 9; ++n) {
        const Vector rhs = sys.rhs(y.col(n), u.row(n).transpose());
        for (int i = 0; i < 2; ++i)
            CHECK(f(i, n) == doctest::Approx(y(i, n + 1) - y(i, n) - dt * rhs(i)));
    }
}

TEST_CASE("physics loss normalization convention") {
    CHECK(physics_loss(Matrix::Zero(2, 4)) == 0.0);
    // all entries 2, C columns -> 4 C / (C + 1) per output
    for (int c : {1, 3, 7}) {
        const Matrix f = Matrix::Constant(3, c, 2.0);
        CHECK(physics_loss(f) == doctest::Approx(4.0 * c / (c + 1.0)));
    }
    // single entry r -> r^2 / 2
    Matrix one(1, 1);
    one << 1.7;
    CHECK(physics_loss(one) == doctest::Approx(1.7 * 1.7 / 2.0));
}

TEST_CASE("fixed and adaptive totals") {
    CHECK(total_loss_fixed(0.5, 0.25, 1.0, 1.0) == doctest::Approx(0.75));
    CHECK(total_loss_fixed(0.5, 0.25, 1.0, 0.0) == doctest::Approx(0.5));
    AdaptiveLossState s{0.0, 0.0};
    CHECK(adaptive_total_loss(2.0, 2.0, s) == doctest::Approx(2.0));
    // at s = -log 2 the exponential weights equal one
    AdaptiveLossState s2{-std::log(2.0), -std::log(2.0)};
    CHECK(adaptive_total_loss(0.5, 0.25, s2) ==
          doctest::Approx(total_loss_fixed(0.5, 0.25, 1, 1) + s2.s_d + s2.s_f));
}

TEST_CASE("adaptive s-gradient closed form and finite differences") {
    const double jd = 0.8, jp = 0.3;
    auto loss = [&](double sd, double sf) {
        return adaptive_total_loss(jd, jp, AdaptiveLossState{sd, sf});
    };
    const double sd0 = 0.4, sf0 = -0.6;
    const double g_sd = -0.5 * std::exp(-sd0) * jd + 1.0;
    const double h = 1e-6;
    CHECK(g_sd == doctest::Approx((loss(sd0 + h, sf0) - loss(sd0 - h, sf0)) / (2 * h)).epsilon(1e-6));
    // stationary point at s_d = log(J_d / 2)
    const double s_star = std::log(jd / 2.0);
    CHECK(-0.5 * std::exp(-s_star) * jd + 1.0 == doctest::Approx(0.0));
}

namespace {

struct SmallProblem {
    Reservoir res;
    PiLossInputs inputs;
    Matrix w0;
};

SmallProblem make_small_problem(const OdeSystem& sys, int n_x, int n_t, int n_f,
                                std::uint64_t seed, const OutputScaling& scaling = {}) {
    SmallProblem p;
    ReservoirConfig cfg;
    cfg.n_x = n_x;
    cfg.n_u = sys.dim_u();
    cfg.n_y = sys.dim_y();
    cfg.alpha = 0.8;
    cfg.rho_star = 0.8;
    cfg.delta_in = 0.3;
    cfg.delta_fb = 0.2;
    cfg.seed = seed;
    p.res = init_reservoir(cfg);

    Rng rng(seed + 1);
    Matrix x_t(n_x, n_t), yhat(sys.dim_y(), n_t), x_f(n_x, n_f), u_f(n_f, sys.dim_u());
    for (int i = 0; i < x_t.size(); ++i) x_t(i % n_x, i / n_x) = rng.uniform(-1, 1);
    for (int i = 0; i < yhat.size(); ++i) yhat(i % sys.dim_y(), i / sys.dim_y()) = rng.uniform(-1, 1);
    for (int i = 0; i < x_f.size(); ++i) x_f(i % n_x, i / n_x) = rng.uniform(-1, 1);
    const bool esp = sys.name() == "esp";
    for (int r = 0; r < n_f; ++r)
        for (int c = 0; c < sys.dim_u(); ++c) {
            const double v = rng.uniform(0.1, 1.0);
            u_f(r, c) = (esp && c == 0) ? 35.0 + 30.0 * v : v;  // ESP: (f [Hz], z)
        }

    p.inputs.x_t = x_t;
    p.inputs.yhat_t = yhat;
    p.inputs.x_f = x_f;
    p.inputs.u_f_phys = u_f;
    p.inputs.sys = &sys;
    p.inputs.dt = 0.05;
    p.inputs.scaling = scaling;

    p.w0 = Matrix::Zero(sys.dim_y(), n_x);
    for (int i = 0; i < p.w0.size(); ++i) p.w0(i % sys.dim_y(), i / sys.dim_y()) = rng.uniform(-0.3, 0.3);
    return p;
}

void check_gradient(const OdeSystem& sys, BalanceMode mode, const OutputScaling& scaling = {}) {
    SmallProblem p = make_small_problem(sys, 10, 20, 50, 7, scaling);
    // Balance s_f against the physics magnitude (where adaptive training
    // operates); otherwise the s finite differences drown in the total.
    const double j_phy0 =
        loss_gradient(p.inputs, p.w0, AdaptiveLossState{}, BalanceMode::fixed).j_physics;
    const AdaptiveLossState s{0.3, std::log(std::max(1.0, j_phy0))};
    const LossEval eval = loss_gradient(p.inputs, p.w0, s, mode);

    Rng rng(13);
    int checked = 0;
    const int n = static_cast<int>(p.w0.size());
    for (int k = 0; k < 100; ++k) {
        const int idx = rng.uniform_int(0, n - 1);
        auto f = [&](double delta) {
            Matrix w = p.w0;
            w(idx % w.rows(), idx / w.rows()) += delta;
            return loss_gradient(p.inputs, w, s, mode).total;
        };
        const double h = 1e-6;
        const double fd = (f(h) - f(-h)) / (2 * h);
        const double an = eval.grad_w(idx % p.w0.rows(), idx / p.w0.rows());
        const double scale = std::max({1e-8, std::abs(fd), std::abs(an)});
        CHECK(std::abs(fd - an) / scale < 1e-5);
        ++checked;
    }
    CHECK(checked == 100);

    if (mode == BalanceMode::adaptive) {
        const double h = 1e-6;
        auto fs = [&](double dsd, double dsf) {
            return loss_gradient(p.inputs, p.w0, AdaptiveLossState{s.s_d + dsd, s.s_f + dsf}, mode)
                .total;
        };
        const double fd_sd = (fs(h, 0) - fs(-h, 0)) / (2 * h);
        const double fd_sf = (fs(0, h) - fs(0, -h)) / (2 * h);
        CHECK(std::abs(fd_sd - eval.grad_sd) / std::max(1.0, std::abs(fd_sd)) < 1e-5);
        CHECK(std::abs(fd_sf - eval.grad_sf) / std::max(1.0, std::abs(fd_sf)) < 1e-5);
    }
}

}  // namespace

TEST_CASE("loss gradient matches finite differences on all systems") {
    check_gradient(VanDerPol{}, BalanceMode::fixed);
    check_gradient(VanDerPol{}, BalanceMode::adaptive);
    {
        // keep the de-normalized levels strictly positive (away from the
        // outflow clamp)
        OutputScaling sc;
        sc.scale = Vector::Constant(4, 1.2);
        sc.offset = Vector::Constant(4, 1.7);
        check_gradient(FourTank{}, BalanceMode::fixed, sc);
        check_gradient(FourTank{}, BalanceMode::adaptive, sc);
    }
    {
        // ESP states live at physical magnitudes; exercise the
        // de-normalization path with a representative scaling.
        OutputScaling sc;
        sc.scale = Vector(3);
        sc.scale << 4e6, 1.5e6, 0.02;
        sc.offset = Vector(3);
        sc.offset << 7e6, 2.5e6, 0.03;
        check_gradient(EspSystem{}, BalanceMode::fixed, sc);
        check_gradient(EspSystem{}, BalanceMode::adaptive, sc);
    }
}

TEST_CASE("gradient reduces to plain least squares without physics") {
    SmallProblem p = make_small_problem(VanDerPol{}, 8, 15, 30, 21);
    p.inputs.lambda_phy = 0.0;
    p.inputs.lambda_data = 1.0;
    const LossEval eval = loss_gradient(p.inputs, p.w0, AdaptiveLossState{}, BalanceMode::fixed);
    const Matrix expect = (2.0 / (2.0 * 15.0)) * (p.w0 * p.inputs.x_t - p.inputs.yhat_t) *
                          p.inputs.x_t.transpose();
    CHECK((eval.grad_w - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero residual and zero data error give a zero gradient") {
    // Outputs forced onto an euler trajectory of the system itself.
    const VanDerPol sys;
    const int n_f = 30;
    Rng rng(31);
    Matrix u(n_f, 1);
    for (int i = 0; i < n_f; ++i) u(i, 0) = rng.uniform(-1, 1);
    const Matrix traj = simulate_euler(sys, Vector::Constant(2, 1.0), u, 0.05);

    // Choose X so that a known W reproduces the trajectory: X = pinv trick
    // with W = [I 0] and states stacked as [y; junk].
    const int n_x = 5;
    Matrix x_f(n_x, n_f);
    for (int i = 0; i < x_f.size(); ++i) x_f(i % n_x, i / n_x) = rng.uniform(-1, 1);
    Matrix w(2, n_x);
    w.setZero();
    x_f.topRows(2) = traj.transpose();  // first two coordinates carry y
    w(0, 0) = 1.0;
    w(1, 1) = 1.0;

    PiLossInputs in;
    in.x_t = x_f;
    in.yhat_t = w * x_f;  // zero data error by construction
    in.x_f = x_f;
    in.u_f_phys = u;
    in.sys = &sys;
    in.dt = 0.05;
    const LossEval eval = loss_gradient(in, w, AdaptiveLossState{}, BalanceMode::fixed);
    CHECK(eval.j_data == 0.0);
    CHECK(eval.j_physics == 0.0);
    CHECK(eval.grad_w.cwiseAbs().maxCoeff() == 0.0);
}

namespace {

TrainView synthetic_view(const Reservoir& res, const OdeSystem& sys, int n_t, int n_f, double dt,
                         std::uint64_t seed) {
    SignalSpec spec;
    spec.kind = SignalKind::aprbs;
    spec.amplitude.assign(sys.dim_u(), {-1.0, 1.0});
    spec.hold_min = 20;
    spec.hold_max = 50;
    spec.seed = seed;
    const Matrix u = generate_signal(spec, n_t + n_f);
    const Matrix traj = simulate_euler(sys, Vector::Constant(sys.dim_y(), 2.0), u, dt);
    TrainView v;
    v.train_inputs = u.topRows(n_t);
    v.train_targets = traj.topRows(n_t);
    v.colloc_inputs = u.bottomRows(n_f);
    v.colloc_inputs_phys = u.bottomRows(n_f);
    v.dt = dt;
    return v;
}

}  // namespace

TEST_CASE("train_pi_esn: loop accounting for M = K = 1") {
    const VanDerPol sys;
    ReservoirConfig cfg;
    cfg.n_x = 40;
    cfg.n_u = 1;
    cfg.n_y = 2;
    cfg.rho_star = 0.8;
    cfg.delta_in = 0.2;
    cfg.delta_fb = 0.1;
    cfg.seed = 3;
    const Reservoir res = init_reservoir(cfg);
    const TrainView v = synthetic_view(res, sys, 100, 50, 0.03, 4);

    PiTrainConfig tc;
    tc.m_outer = 1;
    tc.k_inner = 1;
    tc.ridge.gamma = 1e-6;
    const TrainResult tr = train_pi_esn(res, v, sys, tc);
    CHECK(tr.report.total.size() == 1);
    CHECK(tr.report.j_data.size() == 1);
    CHECK(tr.report.best_total.size() == 1);
}

TEST_CASE("train_pi_esn: best-so-far total is non-increasing") {
    const VanDerPol sys;
    ReservoirConfig cfg;
    cfg.n_x = 40;
    cfg.n_u = 1;
    cfg.n_y = 2;
    cfg.rho_star = 0.8;
    cfg.delta_in = 0.2;
    cfg.delta_fb = 0.1;
    cfg.seed = 5;
    const Reservoir res = init_reservoir(cfg);
    const TrainView v = synthetic_view(res, sys, 150, 100, 0.03, 6);

    PiTrainConfig tc;
    tc.m_outer = 5;
    tc.k_inner = 5;
    tc.ridge.gamma = 1e-6;
    const TrainResult tr = train_pi_esn(res, v, sys, tc);
    for (size_t i = 1; i < tr.report.best_total.size(); ++i)
        CHECK(tr.report.best_total[i] <= tr.report.best_total[i - 1]);
    CHECK(tr.report.best_total.back() <= tr.report.best_total.front());
}

TEST_CASE("train_pi_esn is deterministic") {
    const VanDerPol sys;
    ReservoirConfig cfg;
    cfg.n_x = 30;
    cfg.n_u = 1;
    cfg.n_y = 2;
    cfg.rho_star = 0.8;
    cfg.delta_in = 0.2;
    cfg.delta_fb = 0.1;
    cfg.seed = 8;
    const Reservoir res = init_reservoir(cfg);
    const TrainView v = synthetic_view(res, sys, 120, 80, 0.03, 9);
    PiTrainConfig tc;
    tc.m_outer = 3;
    tc.k_inner = 4;
    const TrainResult a = train_pi_esn(res, v, sys, tc);
    const TrainResult b = train_pi_esn(res, v, sys, tc);
    CHECK(a.readout.w_out == b.readout.w_out);
    CHECK(a.s.s_d == b.s.s_d);
}

TEST_CASE("esn-only mode skips refinement") {
    const VanDerPol sys;
    ReservoirConfig cfg;
    cfg.n_x = 30;
    cfg.n_u = 1;
    cfg.n_y = 2;
    cfg.seed = 8;
    cfg.delta_in = 0.2;
    cfg.delta_fb = 0.1;
    const Reservoir res = init_reservoir(cfg);
    const TrainView v = synthetic_view(res, sys, 120, 80, 0.03, 9);
    PiTrainConfig tc;
    tc.skip_physics = true;
    const TrainResult tr = train_pi_esn(res, v, sys, tc);
    CHECK(tr.report.total.empty());
    CHECK(tr.readout.w_out == tr.pretrained.w_out);
}
