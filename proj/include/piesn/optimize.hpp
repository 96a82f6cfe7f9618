#pragma once

#include "piesn/common.hpp"

#include <functional>

namespace piesn {

/// Evaluates f(x) and writes the gradient into `grad` (same size as x).
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First-order adaptive (moment-based) optimizer. Deterministic; a zero
/// gradient leaves the parameters unchanged.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    void reset(int n);
    Vector step(const Vector& x, const Vector& grad);

    AdamConfig& config() { return cfg_; }

private:
    AdamConfig cfg_;
    Vector m_, v_;
    long t_ = 0;
};

struct LbfgsConfig {
    int memory = 10;
    double c_armijo = 1e-4;   // sufficient decrease
    double c_wolfe = 0.9;     // curvature (strong Wolfe)
    int max_linesearch = 40;
    double grad_tol = 1e-10;  // stop when ||g||_inf below this
    double step_scale = 1.0;  // scales the initial trial step
    double max_step = 1e3;    // line-search step cap
};

struct MinimizeResult {
    Vector x;
    double f = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Called once per accepted iterate, immediately after its evaluation.
using IterateHook = std::function<void(const Vector& x, double f)>;

/// Limited-memory quasi-Newton minimization: two-loop recursion with a
/// strong-Wolfe line search; on line-search failure the iteration falls back
/// to an Armijo-backtracked steepest-descent step.
MinimizeResult lbfgs_minimize(const Objective& f, Vector x0, int max_iters,
                              const LbfgsConfig& cfg = {}, const IterateHook& on_iterate = nullptr);

MinimizeResult adam_minimize(const Objective& f, Vector x0, int max_iters,
                             const AdamConfig& cfg = {}, const IterateHook& on_iterate = nullptr);

}  // namespace piesn
