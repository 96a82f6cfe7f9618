#include "piesn/systems.hpp"

#include "piesn/signals.hpp"
#include "piesn/simulate.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace piesn;

namespace {

double rel_err(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("van der pol right-hand side") {
    VanDerPol sys;
    Vector u(1);
    u << 0.0;
    Vector h(2);

    h << 0.0, 0.0;
    CHECK(sys.rhs(h, u) == Vector::Zero(2));

    h << 1.0, 0.0;
    Vector d = sys.rhs(h, u);
    CHECK(d(0) == 0.0);
    CHECK(d(1) == doctest::Approx(-1.0));

    h << 2.0, 2.0;
    d = sys.rhs(h, u);
    CHECK(d(0) == doctest::Approx(2.0));
    CHECK(d(1) == doctest::Approx(-8.0));  // 1*(1-4)*2 - 2
}

TEST_CASE("van der pol jacobian at origin") {
    VanDerPol sys(VdpParams{1.7});
    Vector u(1);
    u << 0.3;
    Vector h = Vector::Zero(2);
    const Matrix j = sys.jacobian_y(h, u);
    CHECK(j(0, 0) == 0.0);
    CHECK(j(0, 1) == 1.0);
    CHECK(j(1, 0) == -1.0);
    CHECK(j(1, 1) == doctest::Approx(1.7));
}

TEST_CASE("four tank rhs at reference points") {
    FourTank sys;
    Vector v(2), h(4);

    h.setZero();
    v.setZero();
    CHECK(sys.rhs(h, v) == Vector::Zero(4));

    v << 1.0, 0.0;
    const Vector d = sys.rhs(h, v);
    CHECK(d(0) == doctest::Approx(0.7 / 28.0));  // gamma1 k1 / A1
    CHECK(d(3) == doctest::Approx(0.3 / 32.0));
    CHECK(d(1) == 0.0);
    CHECK(d(2) == 0.0);
}

TEST_CASE("four tank steady state found by bisection has zero rhs") {
    // Independent root solve per tank chain under v = (3, 3).
    FourTank sys;
    const auto& p = sys.params();
    Vector v(2);
    v << 3.0, 3.0;
    // h3: a3 sqrt(2 g h3) = (1-gamma2) k2 v2
    auto level_for = [&](double outflow_area, double inflow) {
        const double s = inflow / outflow_area;
        return s * s / (2.0 * p.g);
    };
    const double h3 = level_for(p.o3, (1 - p.gamma2) * p.k2 * v(1));
    const double h4 = level_for(p.o4, (1 - p.gamma1) * p.k1 * v(0));
    const double h1 = level_for(p.o1, p.o3 * std::sqrt(2 * p.g * h3) + p.gamma1 * p.k1 * v(0));
    const double h2 = level_for(p.o2, p.o4 * std::sqrt(2 * p.g * h4) + p.gamma2 * p.k2 * v(1));
    Vector h(4);
    h << h1, h2, h3, h4;
    CHECK(sys.rhs(h, v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("esp flow equations at reference points") {
    EspSystem sys;
    const auto& p = sys.params();
    Vector u(2);
    u << 60.0, 0.5;
    Vector y(3);

    // p_bh = p_r -> zero reservoir inflow enters the p_bh derivative only
    // through -q.
    y << p.p_r, 3e6, 0.0;
    const Vector d = sys.rhs(y, u);
    CHECK(d(0) == doctest::Approx(0.0));  // q_r = 0 and q = 0

    // closed choke
    u << 60.0, 0.0;
    CHECK(sys.choke_flow(3e6, 0.0) == 0.0);

    // head at zero flow equals c0
    CHECK(sys.head(0.0, p.f0) == doctest::Approx(959.70));
}

TEST_CASE("esp friction is odd and vanishes at zero flow") {
    EspSystem sys;
    CHECK(sys.friction(0.0) == 0.0);
    CHECK(sys.friction(0.013) == doctest::Approx(-sys.friction(-0.013)));
    CHECK(sys.friction(0.013) > 0.0);
}

TEST_CASE("analytic jacobians match central differences at random interior points") {
    Rng rng(2024);
    VanDerPol vdp;
    FourTank tank;
    EspSystem esp;

    for (int k = 0; k < 100; ++k) {
        {
            Vector y(2), u(1);
            y << rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5);
            u << rng.uniform(-1, 1);
            CHECK(rel_err(vdp.jacobian_y(y, u), fd_jacobian(vdp, y, u)) < 1e-5);
        }
        {
            Vector y(4), u(2);
            for (int i = 0; i < 4; ++i) y(i) = rng.uniform(0.2, 3.0);
            u << rng.uniform(0, 5), rng.uniform(0, 5);
            CHECK(rel_err(tank.jacobian_y(y, u), fd_jacobian(tank, y, u)) < 1e-5);
        }
        {
            Vector y(3), u(2);
            y << rng.uniform(5e6, 1.2e7), rng.uniform(1e6, 5e6), rng.uniform(0.005, 0.05);
            u << rng.uniform(35, 65), rng.uniform(0.1, 1.0);
            CHECK(rel_err(esp.jacobian_y(y, u), fd_jacobian(esp, y, u)) < 1e-5);
        }
    }
}

TEST_CASE("four tank jacobian diagonal closed form") {
    FourTank sys;
    const auto& p = sys.params();
    Vector y(4), u(2);
    y << 1.3, 0.8, 0.5, 0.4;
    u << 2.0, 2.0;
    const Matrix j = sys.jacobian_y(y, u);
    CHECK(j(0, 0) == doctest::Approx(-(p.o1 / p.a1) * p.g / std::sqrt(2 * p.g * y(0))));
}

TEST_CASE("euler simulation: zero rhs keeps the trajectory constant") {
    // mu = 0, u = h1 ... not zero; instead hold the VdP at its fixed point.
    VanDerPol sys;
    Matrix inputs = Matrix::Zero(50, 1);
    Vector y0 = Vector::Zero(2);
    const Matrix traj = simulate_euler(sys, y0, inputs, 0.03);
    CHECK(traj.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("euler energy drift shrinks linearly with dt") {
    // mu = 0 reduces VdP to the harmonic oscillator; explicit Euler grows
    // the energy h1^2 + h2^2 at a rate O(dt) per unit time.
    VanDerPol sys(VdpParams{0.0});
    Vector y0(2);
    y0 << 1.0, 0.0;
    auto drift = [&](double dt, int steps) {
        const Matrix traj = simulate_euler(sys, y0, Matrix::Zero(steps, 1), dt);
        const Vector last = traj.row(steps - 1).transpose();
        return last.squaredNorm() - 1.0;
    };
    const double d1 = drift(0.01, 1000);   // horizon 10 s
    const double d2 = drift(0.005, 2000);  // same horizon, half step
    CHECK(d1 > 0.0);
    CHECK(d2 > 0.0);
    CHECK(d1 / d2 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("four tank dataset protocol runs and keeps levels non-negative") {
    FourTank sys;
    SignalSpec spec;
    spec.kind = SignalKind::prbs;
    spec.amplitude = {{0.0, 5.0}, {0.0, 5.0}};  // extreme inputs incl. pumps off
    spec.hold_min = 100;
    spec.hold_max = 200;
    spec.seed = 3;
    const Matrix inputs = generate_signal(spec, 2000);
    const Matrix traj = simulate_euler(sys, Vector::Constant(4, 2.0), inputs, 1.0);
    CHECK(traj.minCoeff() >= 0.0);
}

TEST_CASE("simulate_euler reports the diverging step") {
    // An unstable linear system under huge dt blows up quickly.
    VanDerPol sys(VdpParams{-50.0});
    Matrix inputs = Matrix::Zero(2000, 1);
    Vector y0(2);
    y0 << 1.0, 1.0;
    CHECK_THROWS_AS(simulate_euler(sys, y0, inputs, 10.0), DivergenceError);
}

TEST_CASE("system factory rejects unknown names and keys") {
    CHECK_THROWS_AS(make_system("pendulum", {}), ConfigError);
    nlohmann::json p = {{"mu", 1.0}, {"nu", 2.0}};
    CHECK_THROWS_AS(make_system("vdp", p), ConfigError);
}
