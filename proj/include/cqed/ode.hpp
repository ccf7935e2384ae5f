#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cqed/error.hpp"

namespace cqed {

struct IntegratorOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  double initial_step = 1e-4;
  std::size_t max_steps = 50'000'000;
};

/// Dormand-Prince 5(4) integration of x' = rhs(t, x), reporting the state at
/// every point of an ascending output grid. Steps are clipped to land exactly on
/// grid points. `Vector` is any Eigen column vector type.
template <typename Vector, typename Rhs>
std::vector<Vector> integrate_dopri(Rhs&& rhs, Vector x, std::span<const double> t_grid,
                                    const IntegratorOptions& opts = {}) {
  using Real = typename Eigen::NumTraits<typename Vector::Scalar>::Real;
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b*, the embedded fourth-order difference
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  std::vector<Vector> out;
  out.reserve(t_grid.size());
  if (t_grid.empty()) return out;

  double t = 0.0;
  double h = opts.initial_step;
  Vector k1 = rhs(t, x);
  std::size_t steps = 0;
  for (const double target : t_grid) {
    if (target < t) throw InputError("output grid must be ascending and non-negative");
    while (t < target) {
      if (++steps > opts.max_steps) throw NumericalError("integrator exceeded step budget at t = " + std::to_string(t));
      const bool clipped = t + h >= target;
      const double step = clipped ? target - t : h;
      const Vector k2 = rhs(t + c2 * step, (x + step * a21 * k1).eval());
      const Vector k3 = rhs(t + c3 * step, (x + step * (a31 * k1 + a32 * k2)).eval());
      const Vector k4 = rhs(t + c4 * step, (x + step * (a41 * k1 + a42 * k2 + a43 * k3)).eval());
      const Vector k5 = rhs(t + c5 * step, (x + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)).eval());
      const Vector k6 = rhs(t + step, (x + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)).eval());
      const Vector x_new = x + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const Vector k7 = rhs(t + step, x_new);
      const Vector err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      Real err_norm = 0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const Real scale = opts.abs_tol + opts.rel_tol * std::max(std::abs(x[i]), std::abs(x_new[i]));
        err_norm = std::max(err_norm, Real(std::abs(err[i]) / scale));
      }
      if (!std::isfinite(err_norm) || !x_new.allFinite())
        throw NumericalError("integration produced non-finite values at t = " + std::to_string(t));

      const bool accepted = err_norm <= 1.0;
      if (accepted) {
        t = clipped ? target : t + step;
        x = x_new;
        k1 = k7;
      }
      const double factor = err_norm == 0 ? 5.0 : std::clamp(0.9 * std::pow(double(err_norm), -0.2), 0.2, 5.0);
      // a step shortened only to hit the grid says little about the next one
      h = (accepted && clipped) ? std::max(h, step * factor) : step * factor;
      if (h < 1e-15 * std::max(1.0, std::abs(t))) throw NumericalError("step size underflow at t = " + std::to_string(t));
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace cqed
