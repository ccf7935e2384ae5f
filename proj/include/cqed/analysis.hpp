#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "cqed/ensemble.hpp"
#include "cqed/model.hpp"
#include "cqed/trace.hpp"

namespace cqed {

/// f(tau) = c - a0 / (1 + (tau / w)^2)
struct LorentzFit {
  double c = 0.0;
  double a0 = 0.0;
  double w = 0.0;                 ///< HWHM [us]
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  ///< order (c, a0, w)
  double residual_norm = 0.0;     ///< sqrt of the (weighted) sum of squared residuals
  double chi2_reduced = 0.0;
  double speed = 0.0;             ///< a0 / w [1/us]
  double speed_err = 0.0;
  double window_end = 0.0;        ///< last delay used [us]
  std::size_t points = 0;
  int iterations = 0;
  bool bunched = false;           ///< a0 <= 0
  std::vector<double> objective;  ///< value after each accepted step, starting with the initial guess

  double operator()(double tau) const { return c - a0 / (1.0 + (tau / w) * (tau / w)); }
};

struct FitOptions {
  std::optional<double> window_end;  ///< [us]; default from the trace shape
  double rel_tol = 1e-10;
  int max_iterations = 500;
};

/// Weighted Levenberg-Marquardt fit on tau >= 0. Weights are 1/stderr^2 when the
/// trace carries positive errors; otherwise the covariance is scaled by the
/// residual variance.
LorentzFit fit_inverted_lorentzian(const CorrelationTrace& trace, const FitOptions& opts = {});

/// The default window end: 1.5 times the first delay, after the minimum, where
/// the trace climbs back to c - 0.1 a0 (initial estimates).
double default_fit_window(const CorrelationTrace& trace);

struct LinearFit {
  double slope = 0.0;
  double slope_err = 0.0;
  double intercept = 0.0;
  double intercept_err = 0.0;
  double chi2_reduced = 0.0;
};

/// Weighted least squares y = intercept + slope x; errors must be positive.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y, std::span<const double> y_err);

struct SweepPoint {
  double omega_vr_mhz = 0.0;
  double n_eff = 0.0;
  double speed = 0.0;
  double speed_err = 0.0;
  LorentzFit fit;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  LinearFit regression;
};

struct SweepOptions {
  std::vector<double> tau_grid;  ///< default: 0 .. 1.5 us in 5 ns steps
  std::size_t batches = 10;      ///< batch means for the ensemble scatter
};

/// Speed a0/HWHM of ensemble-averaged g2 at each target |Omega_VR|/2pi, then the
/// weighted regression of speed on the target. A point's error combines the
/// fit covariance with the scatter of the speed over realization batches.
SweepResult speed_sweep(std::span<const double> targets_mhz, const ModeGeometry& geom, const BeamConfig& beam,
                        const RateParams& params, const SweepOptions& opts = {});

}  // namespace cqed
