#include "piesn/optimize.hpp"

#include <cmath>
#include <deque>

namespace piesn {

void AdamOptimizer::reset(int n) {
    m_ = Vector::Zero(n);
    v_ = Vector::Zero(n);
    t_ = 0;
}

Vector AdamOptimizer::step(const Vector& x, const Vector& grad) {
    if (m_.size() != x.size()) reset(static_cast<int>(x.size()));
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    return x - cfg_.lr * (m_.array() / bc1 / ((v_.array() / bc2).sqrt() + cfg_.eps)).matrix();
}

MinimizeResult adam_minimize(const Objective& f, Vector x0, int max_iters, const AdamConfig& cfg,
                             const IterateHook& on_iterate) {
    AdamOptimizer opt(cfg);
    opt.reset(static_cast<int>(x0.size()));
    MinimizeResult res;
    res.x = std::move(x0);
    Vector grad(res.x.size());
    res.f = f(res.x, grad);
    ++res.evaluations;
    for (int it = 0; it < max_iters; ++it) {
        if (grad.lpNorm<Eigen::Infinity>() < 1e-14) {
            res.converged = true;
            break;
        }
        res.x = opt.step(res.x, grad);
        res.f = f(res.x, grad);
        ++res.evaluations;
        ++res.iterations;
        if (on_iterate) on_iterate(res.x, res.f);
    }
    return res;
}

namespace {

struct LinesearchResult {
    double step = 0.0;
    double f = 0.0;
    Vector x, g;
    int evaluations = 0;
    bool ok = false;
};

// Strong-Wolfe line search (bracket + zoom). phi(a) = f(x + a d).
LinesearchResult wolfe_linesearch(const Objective& f, const Vector& x, double f0, const Vector& g0,
                                  const Vector& d, double a_init, const LbfgsConfig& cfg) {
    LinesearchResult out;
    const double dphi0 = g0.dot(d);
    if (dphi0 >= 0.0) return out;  // not a descent direction

    auto eval = [&](double a, double& fa, double& dphia, Vector& xa, Vector& ga) {
        xa = x + a * d;
        fa = f(xa, ga);
        dphia = ga.dot(d);
        ++out.evaluations;
    };

    double a_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
    double a = std::min(a_init, cfg.max_step);
    double a_lo = 0, a_hi = 0, f_lo = 0, dphi_lo = 0;
    bool bracketed = false;

    Vector xa, ga;
    double fa = 0, dphia = 0;
    for (int i = 0; i < cfg.max_linesearch && !bracketed; ++i) {
        eval(a, fa, dphia, xa, ga);
        if (fa > f0 + cfg.c_armijo * a * dphi0 || (i > 0 && fa >= f_prev)) {
            a_lo = a_prev; f_lo = f_prev; dphi_lo = dphi_prev;
            a_hi = a;
            bracketed = true;
            break;
        }
        if (std::abs(dphia) <= -cfg.c_wolfe * dphi0) {
            out.ok = true;
            out.step = a; out.f = fa; out.x = xa; out.g = ga;
            return out;
        }
        if (dphia >= 0.0) {
            a_lo = a; f_lo = fa; dphi_lo = dphia;
            a_hi = a_prev;
            bracketed = true;
            break;
        }
        a_prev = a; f_prev = fa; dphi_prev = dphia;
        if (a >= cfg.max_step) break;
        a = std::min(a * 2.0, cfg.max_step);
    }
    if (!bracketed) return out;

    // zoom
    for (int i = 0; i < cfg.max_linesearch; ++i) {
        const double am = 0.5 * (a_lo + a_hi);
        eval(am, fa, dphia, xa, ga);
        if (fa > f0 + cfg.c_armijo * am * dphi0 || fa >= f_lo) {
            a_hi = am;
        } else {
            if (std::abs(dphia) <= -cfg.c_wolfe * dphi0) {
                out.ok = true;
                out.step = am; out.f = fa; out.x = xa; out.g = ga;
                return out;
            }
            if (dphia * (a_hi - a_lo) >= 0.0) a_hi = a_lo;
            a_lo = am; f_lo = fa; dphi_lo = dphia;
        }
        if (std::abs(a_hi - a_lo) < 1e-16 * std::max(1.0, std::abs(a_lo))) break;
    }
    return out;
}

// Armijo backtracking along d, the steepest-descent fallback.
LinesearchResult armijo_backtrack(const Objective& f, const Vector& x, double f0, const Vector& g0,
                                  const Vector& d, double a_init, const LbfgsConfig& cfg) {
    LinesearchResult out;
    const double dphi0 = g0.dot(d);
    double a = a_init;
    for (int i = 0; i < cfg.max_linesearch; ++i) {
        Vector xa = x + a * d;
        Vector ga(x.size());
        const double fa = f(xa, ga);
        ++out.evaluations;
        if (fa <= f0 + cfg.c_armijo * a * dphi0) {
            out.ok = true;
            out.step = a; out.f = fa; out.x = std::move(xa); out.g = std::move(ga);
            return out;
        }
        a *= 0.5;
    }
    return out;
}

}  // namespace

MinimizeResult lbfgs_minimize(const Objective& f, Vector x0, int max_iters, const LbfgsConfig& cfg,
                              const IterateHook& on_iterate) {
    MinimizeResult res;
    res.x = std::move(x0);
    const int n = static_cast<int>(res.x.size());
    Vector g(n);
    res.f = f(res.x, g);
    ++res.evaluations;

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int it = 0; it < max_iters; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= cfg.grad_tol) {
            res.converged = true;
            break;
        }

        // Two-loop recursion.
        Vector q = g;
        const int m = static_cast<int>(s_hist.size());
        std::vector<double> alpha(m);
        for (int i = m - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (m > 0) {
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (int i = 0; i < m; ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Vector d = -q;

        double a_init = cfg.step_scale;
        if (m == 0) {
            // First step: unit-ish step scaled to the gradient.
            a_init = cfg.step_scale / std::max(1.0, g.norm());
        }

        auto ls = wolfe_linesearch(f, res.x, res.f, g, d, a_init, cfg);
        if (!ls.ok) {
            // Fall back to steepest descent with Armijo backtracking.
            d = -g;
            ls = armijo_backtrack(f, res.x, res.f, g, d, cfg.step_scale / std::max(1.0, g.norm()), cfg);
            if (!ls.ok) {
                res.evaluations += ls.evaluations;
                break;  // no progress possible at this scale
            }
            s_hist.clear(); y_hist.clear(); rho_hist.clear();
        }
        res.evaluations += ls.evaluations;

        Vector s = ls.x - res.x;
        Vector yv = ls.g - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > cfg.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        res.x = ls.x;
        res.f = ls.f;
        g = ls.g;
        ++res.iterations;
        if (on_iterate) on_iterate(res.x, res.f);
    }
    return res;
}

}  // namespace piesn
