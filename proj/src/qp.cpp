#include "piesn/qp.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace piesn {

namespace {

struct DualState {
    Vector x;
    Vector lambda;
    double kkt = 0.0;
    int sweeps = 0;
    bool converged = false;
};

// Scale-normalized KKT residual: feasibility relative to the bound scale,
// complementarity relative to the multiplier scale, stationarity relative
// to the gradient-term scale.
void fill_kkt(DualState& st, const Matrix& q, const Vector& c, const Matrix& a, const Vector& b) {
    if (a.rows() == 0) {
        st.kkt = (q * st.x + c).lpNorm<Eigen::Infinity>() /
                 std::max(1.0, c.lpNorm<Eigen::Infinity>());
        return;
    }
    const Vector r = a * st.x - b;
    const double b_scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    const double l_scale = std::max(1.0, st.lambda.cwiseAbs().maxCoeff());
    const double viol = std::max(0.0, r.maxCoeff()) / b_scale;
    const double comp = (st.lambda.array() * r.array()).abs().maxCoeff() / (l_scale * b_scale);
    const Vector at_l = a.transpose() * st.lambda;
    const double g_scale = std::max({1.0, c.lpNorm<Eigen::Infinity>(),
                                     at_l.lpNorm<Eigen::Infinity>()});
    const double stat = (q * st.x + c + at_l).lpNorm<Eigen::Infinity>() / g_scale;
    st.kkt = std::max({viol, comp, stat});
}

// Equality-KKT solve on a candidate active set; returns true when the
// resulting point is primal feasible with non-negative multipliers.
bool try_active_set(const Matrix& q, const Vector& c, const Matrix& a, const Vector& b,
                    const std::vector<int>& act, double tol, DualState& st) {
    const int n = static_cast<int>(q.rows());
    const int k = static_cast<int>(act.size());
    Matrix kkt = Matrix::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = q;
    Vector rhs(n + k);
    rhs.head(n) = -c;
    for (int i = 0; i < k; ++i) {
        kkt.block(0, n + i, n, 1) = a.row(act[i]).transpose();
        kkt.block(n + i, 0, 1, n) = a.row(act[i]);
        rhs(n + i) = b(act[i]);
    }
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (!lu.isInvertible()) return false;
    const Vector sol = lu.solve(rhs);
    const Vector x = sol.head(n);
    const Vector lam_act = sol.tail(k);
    if ((lam_act.array() < -tol).any()) return false;
    if (((a * x - b).array() > tol).any()) return false;
    st.x = x;
    st.lambda = Vector::Zero(a.rows());
    for (int i = 0; i < k; ++i) st.lambda(act[i]) = std::max(0.0, lam_act(i));
    st.converged = true;
    return true;
}

// Hildreth coordinate ascent on the dual of min x^T H x + c^T x, A x <= b,
// with periodic active-set polishing (the coordinate sweeps identify the
// active rows quickly; the equality solve then lands on the exact optimum).
// With Q = 2H: x(l) = x0 - Q^{-1} A^T l, P = A Q^{-1} A^T, d = A x0 - b.
DualState hildreth(const Matrix& h, const Vector& c, const Matrix& a, const Vector& b,
                   const HildrethConfig& cfg) {
    DualState st;
    const Matrix q = 2.0 * h;
    Eigen::LDLT<Matrix> qf(q);
    if (qf.info() != Eigen::Success || !qf.isPositive())
        throw NumericsError("solve_qp: Hessian is not positive definite");

    const Vector x0 = qf.solve(-c);
    const int rows = static_cast<int>(a.rows());
    st.lambda = Vector::Zero(rows);
    if (rows == 0) {
        st.x = x0;
        st.converged = true;
        return st;
    }

    const Vector d = a * x0 - b;
    if ((d.array() <= cfg.kkt_tol).all()) {
        // Unconstrained minimizer already feasible.
        st.x = x0;
        st.converged = true;
        fill_kkt(st, q, c, a, b);
        return st;
    }

    const Matrix qinv_at = qf.solve(a.transpose());
    const Matrix p = a * qinv_at;
    const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
    const double lambda_cap = 1e12 * scale;

    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        for (int i = 0; i < rows; ++i) {
            const double pii = p(i, i);
            if (pii <= 0.0) continue;
            // dual coordinate maximum: lambda_i = (d_i - sum_{j!=i} P_ij l_j)/P_ii
            const double w = d(i) - (p.row(i).dot(st.lambda) - pii * st.lambda(i));
            st.lambda(i) = std::max(0.0, w / pii);
        }
        st.sweeps = sweep + 1;

        const Vector r = d - p * st.lambda;  // = A x(lambda) - b
        const double viol = r.maxCoeff();
        const double comp = (st.lambda.array() * r.array()).abs().maxCoeff();
        if (viol <= cfg.kkt_tol * scale && comp <= cfg.kkt_tol * scale) {
            st.converged = true;
            break;
        }
        // Unbounded multipliers signal an infeasible primal.
        if (st.lambda.maxCoeff() > lambda_cap) break;

        // Polish: the sweeps localize the active set long before the
        // multipliers settle; try the exact equality solve on it.
        if (sweep >= 4 && sweep % 5 == 4) {
            std::vector<int> act;
            for (int i = 0; i < rows; ++i)
                if (st.lambda(i) > 0.0 || r(i) > -cfg.kkt_tol * scale) act.push_back(i);
            DualState polished;
            if (static_cast<int>(act.size()) <= static_cast<int>(q.rows()) &&
                try_active_set(q, c, a, b, act, 1e-10 * scale, polished)) {
                polished.sweeps = st.sweeps;
                fill_kkt(polished, q, c, a, b);
                return polished;
            }
        }
    }
    st.x = x0 - qinv_at * st.lambda;
    fill_kkt(st, q, c, a, b);
    return st;
}

}  // namespace

QpSolution solve_qp(const QpProblem& qp, const HildrethConfig& cfg) {
    const int n = static_cast<int>(qp.h.rows());
    if (qp.h.cols() != n || qp.c.size() != n) throw ConfigError("solve_qp: shape mismatch");
    if (qp.a.rows() != qp.b.size()) throw ConfigError("solve_qp: constraint shape mismatch");
    if (!qp.soft.empty() && static_cast<int>(qp.soft.size()) != qp.a.rows())
        throw ConfigError("solve_qp: soft flags do not match constraint rows");
    if (((qp.h - qp.h.transpose()).cwiseAbs().maxCoeff()) >
        1e-12 * std::max(1.0, qp.h.cwiseAbs().maxCoeff()))
        throw NumericsError("solve_qp: Hessian not symmetric");

    QpSolution sol;
    DualState st = hildreth(qp.h, qp.c, qp.a, qp.b, cfg);
    if (st.converged) {
        sol.x = st.x;
        sol.lambda = st.lambda.size() ? st.lambda : Vector::Zero(qp.a.rows());
        sol.kkt_residual = st.kkt;
        sol.sweeps = st.sweeps;
        sol.converged = true;
        return sol;
    }

    // The hard problem did not converge (typically conflicting output rows):
    // relax the soft rows with penalized slacks s >= 0, a_i x - s_i <= b_i.
    int n_soft = 0;
    for (size_t i = 0; i < qp.soft.size(); ++i) n_soft += qp.soft[i] ? 1 : 0;
    if (n_soft == 0)
        throw NumericsError("solve_qp: infeasible constraint set and no soft rows to relax");

    const int rows = static_cast<int>(qp.a.rows());
    const int nz = n + n_soft;
    Matrix h2 = Matrix::Zero(nz, nz);
    h2.topLeftCorner(n, n) = qp.h;
    h2.bottomRightCorner(n_soft, n_soft) = qp.soft_penalty * Matrix::Identity(n_soft, n_soft);
    Vector c2 = Vector::Zero(nz);
    c2.head(n) = qp.c;
    Matrix a2 = Matrix::Zero(rows + n_soft, nz);
    Vector b2 = Vector::Zero(rows + n_soft);
    a2.topLeftCorner(rows, n) = qp.a;
    b2.head(rows) = qp.b;
    int k = 0;
    for (int i = 0; i < rows; ++i) {
        if (qp.soft[i]) {
            a2(i, n + k) = -1.0;         // a_i x - s_k <= b_i
            a2(rows + k, n + k) = -1.0;  // -s_k <= 0
            ++k;
        }
    }

    st = hildreth(h2, c2, a2, b2, cfg);
    sol.x = st.x.head(n);
    sol.lambda = st.lambda.head(rows);
    sol.kkt_residual = st.kkt;
    sol.sweeps = st.sweeps;
    sol.relaxed = true;
    sol.converged = st.converged;
    return sol;
}

}  // namespace piesn
