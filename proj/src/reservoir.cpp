#include "piesn/reservoir.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>

namespace piesn {

void ReservoirConfig::validate() const {
    if (n_x < 1) throw ConfigError("reservoir: n_x must be >= 1");
    if (n_u < 0 || n_y < 0) throw ConfigError("reservoir: dimensions must be non-negative");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("reservoir: alpha must lie in (0,1]");
    if (!(rho_star > 0.0 && rho_star < 1.0)) throw ConfigError("reservoir: rho_star must lie in (0,1)");
    if (delta_in < 0.0 || delta_fb < 0.0 || delta_b < 0.0)
        throw ConfigError("reservoir: scalings must be non-negative");
}

namespace {

double dense_spectral_radius(const Matrix& m) {
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double spectral_radius(const Matrix& m) {
    const int n = static_cast<int>(m.rows());
    if (n != m.cols()) throw NumericsError("spectral_radius: matrix not square");
    if (n == 0) return 0.0;
    if (n == 1) return std::abs(m(0, 0));

    // Block power iteration. A one-dimensional iteration stalls when the
    // dominant eigenvalues are a complex-conjugate pair, so iterate a small
    // orthonormal subspace and take the max-modulus Ritz value.
    const int k = std::min(8, n);
    Rng rng(0x5EED5EED12345678ull);
    Matrix basis(n, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < n; ++i) basis(i, j) = rng.uniform(-1.0, 1.0);
    basis = Eigen::HouseholderQR<Matrix>(basis).householderQ() * Matrix::Identity(n, k);

    const double scale = m.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;

    double prev = -1.0;
    int settled = 0;  // require the tolerance twice in a row
    const int max_iters = 20000;
    for (int it = 0; it < max_iters; ++it) {
        Matrix z = m * basis;
        if (z.norm() < 1e-300) return 0.0;
        basis = Eigen::HouseholderQR<Matrix>(z).householderQ() * Matrix::Identity(n, k);
        const Matrix small = basis.transpose() * (m * basis);
        Eigen::EigenSolver<Matrix> es(small, false);
        const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
        if (prev >= 0.0 && std::abs(rho - prev) <= 1e-12 * std::max(1.0, rho)) {
            if (++settled >= 2) return rho;
        } else {
            settled = 0;
        }
        prev = rho;
    }
    if (n <= 512) return dense_spectral_radius(m);
    throw NumericsError("spectral_radius: power iteration did not converge");
}

Reservoir init_reservoir(const ReservoirConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Reservoir res;
    res.cfg = cfg;
    res.alpha = cfg.alpha;

    // Input weights: 0 / +delta_in / -delta_in with probabilities .5/.25/.25.
    res.w_in.resize(cfg.n_x, cfg.n_u);
    for (int i = 0; i < cfg.n_x; ++i)
        for (int j = 0; j < cfg.n_u; ++j) {
            const double u = rng.uniform();
            res.w_in(i, j) = u < 0.5 ? 0.0 : (u < 0.75 ? cfg.delta_in : -cfg.delta_in);
        }

    // Recurrent weights: uniform [-1,1], rescaled to the target radius.
    Matrix w_raw(cfg.n_x, cfg.n_x);
    for (int i = 0; i < cfg.n_x; ++i)
        for (int j = 0; j < cfg.n_x; ++j) w_raw(i, j) = rng.uniform(-1.0, 1.0);
    const double rho_raw = spectral_radius(w_raw);
    if (!(rho_raw > 1e-12))
        throw NumericsError("init_reservoir: raw recurrent matrix has numerically zero spectral radius");
    res.w = w_raw * (cfg.rho_star / rho_raw);

    res.w_fb.resize(cfg.n_x, cfg.n_y);
    for (int i = 0; i < cfg.n_x; ++i)
        for (int j = 0; j < cfg.n_y; ++j) res.w_fb(i, j) = rng.uniform(-cfg.delta_fb, cfg.delta_fb);

    res.w_b = Vector::Zero(cfg.n_x);
    if (cfg.delta_b > 0.0)
        for (int i = 0; i < cfg.n_x; ++i) res.w_b(i) = rng.uniform(-cfg.delta_b, cfg.delta_b);

    return res;
}

Vector update_state(const Reservoir& res, const Vector& x, const Vector& u, const Vector& y_fb) {
    if (x.size() != res.n_x() || u.size() != res.n_u() || y_fb.size() != res.n_y())
        throw ConfigError("update_state: dimension mismatch");
    if (!all_finite(x) || !all_finite(u) || !all_finite(y_fb))
        throw NumericsError("update_state: non-finite input");
    Vector pre = res.w_in * u + res.w * x + res.w_fb * y_fb + res.w_b;
    return (1.0 - res.alpha) * x + res.alpha * pre.array().tanh().matrix();
}

StateMatrix run_teacher_forced(const Reservoir& res, const Matrix& inputs, const Matrix& targets,
                               const Vector& x0, const Vector& y_init) {
    const int steps = static_cast<int>(inputs.rows());
    if (steps < 1) throw ConfigError("run_teacher_forced: need at least one step");
    if (targets.rows() != steps) throw ConfigError("run_teacher_forced: inputs/targets length mismatch");
    if (!all_finite(targets)) throw NumericsError("run_teacher_forced: non-finite target");

    StateMatrix sm;
    sm.role = StateMatrix::Role::teacher_forced;
    sm.cols.resize(res.n_x(), steps);
    Vector fb = y_init.size() > 0 ? y_init : Vector(targets.row(0).transpose());
    Vector x = x0;
    for (int n = 0; n < steps; ++n) {
        x = update_state(res, x, inputs.row(n).transpose(), fb);
        sm.cols.col(n) = x;
        fb = targets.row(n).transpose();
    }
    return sm;
}

FreeRunResult run_free(const Reservoir& res, const Readout& ro, const Matrix& inputs,
                       const Vector& x0, const Vector& y0, double blowup) {
    const int steps = static_cast<int>(inputs.rows());
    if (steps < 1) throw ConfigError("run_free: need at least one step");

    FreeRunResult out;
    out.states.role = StateMatrix::Role::free_run;
    out.states.cols.resize(res.n_x(), steps);
    out.outputs.resize(steps, res.n_y());
    Vector x = x0;
    Vector fb = y0;
    for (int n = 0; n < steps; ++n) {
        x = update_state(res, x, inputs.row(n).transpose(), fb);
        Vector y = ro.w_out * x;
        if (!all_finite(y) || y.cwiseAbs().maxCoeff() > blowup)
            throw DivergenceError("run_free: output diverged at step " + std::to_string(n), n);
        out.states.cols.col(n) = x;
        out.outputs.row(n) = y.transpose();
        fb = y;
    }
    return out;
}

Vector warmup(const Reservoir& res, const Matrix& inputs, const Matrix& targets, int n_warm) {
    if (n_warm < 0 || n_warm > inputs.rows() || n_warm > targets.rows())
        throw ConfigError("warmup: n_warm out of range");
    Vector x = Vector::Zero(res.n_x());
    if (n_warm == 0) return x;
    const StateMatrix sm =
        run_teacher_forced(res, inputs.topRows(n_warm), targets.topRows(n_warm), x);
    return sm.cols.col(n_warm - 1);
}

}  // namespace piesn
