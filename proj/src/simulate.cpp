#include "piesn/simulate.hpp"

namespace piesn {

Matrix simulate_euler(const OdeSystem& sys, const Vector& y0, const Matrix& inputs, double dt) {
    if (dt <= 0.0) throw ConfigError("simulate_euler: dt must be positive");
    if (y0.size() != sys.dim_y()) throw ConfigError("simulate_euler: y0 dimension mismatch");
    if (inputs.cols() != sys.dim_u()) throw ConfigError("simulate_euler: input dimension mismatch");

    const int steps = static_cast<int>(inputs.rows());
    Matrix traj(steps, sys.dim_y());
    Vector y = sys.clamp_state(y0);
    for (int n = 0; n < steps; ++n) {
        traj.row(n) = y.transpose();
        if (n + 1 < steps) {
            y = sys.clamp_state(y + dt * sys.rhs(y, inputs.row(n).transpose()));
            if (!all_finite(y))
                throw DivergenceError("simulate_euler: non-finite state at step " + std::to_string(n + 1), n + 1);
        }
    }
    return traj;
}

}  // namespace piesn
