#pragma once

#include "piesn/common.hpp"

#include <vector>

namespace piesn {

/// min x^T H x + c^T x  s.t.  A x <= b. H must be symmetric positive
/// definite. Rows flagged in `soft` may be relaxed through penalized slacks
/// when the hard problem is infeasible.
struct QpProblem {
    Matrix h;
    Vector c;
    Matrix a;  // rows x n
    Vector b;
    std::vector<bool> soft;     // per row; empty => all hard
    double soft_penalty = 1e6;  // slack weight used on relaxation
};

struct HildrethConfig {
    int max_sweeps = 50000;
    double kkt_tol = 1e-11;
};

struct QpSolution {
    Vector x;
    Vector lambda;  // multipliers for the rows of `a`
    // Max of stationarity, primal feasibility and complementary slackness,
    // each normalized by its problem scale.
    double kkt_residual = 0.0;
    int sweeps = 0;
    bool relaxed = false;  // soft rows were slack-relaxed
    bool converged = false;
};

/// Dual coordinate ascent (Hildreth). The unconstrained minimizer is
/// returned directly when it is feasible. If the hard problem fails to
/// converge, soft rows are re-solved with penalized slack variables and the
/// solution is flagged `relaxed`. Throws NumericsError when no soft rows
/// exist to relax.
QpSolution solve_qp(const QpProblem& qp, const HildrethConfig& cfg = {});

}  // namespace piesn
