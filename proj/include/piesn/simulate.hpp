#pragma once

#include "piesn/common.hpp"
#include "piesn/systems.hpp"

namespace piesn {

/// Explicit Euler: y[n+1] = clamp(y[n] + dt N(y[n], u[n])). Returns T rows;
/// row 0 is y0, row n is the state reached under inputs rows 0..n-1, so each
/// state row is aligned with the input row applied over the same interval.
/// Throws DivergenceError (with the step) on a non-finite state.
Matrix simulate_euler(const OdeSystem& sys, const Vector& y0, const Matrix& inputs, double dt);

}  // namespace piesn
