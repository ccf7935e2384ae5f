#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "cqed/atoms.hpp"
#include "cqed/config.hpp"
#include "cqed/model.hpp"
#include "cqed/trace.hpp"

namespace cqed {

/// Gaussian standing-wave mode and the box atoms are drawn from. The box is
/// centred on the mode axis in x and y and starts at an antinode in z.
struct ModeGeometry {
  double waist_um = 25.0;
  double wavelength_um = 0.78;
  double half_x_um = 50.0;
  double half_y_um = 50.0;
  double z_extent_um = 1.56;

  /// Coupling relative to g_max at a point.
  double relative_coupling(const Eigen::Vector3d& r) const;

  /// Throws InputError unless waist > 0, half-widths >= 2 waist and z extent >= wavelength.
  void validate() const;
  static ModeGeometry from_config(const Config& cfg);
};

struct BeamConfig {
  double target_n_eff = 1.0;
  double jitter_kappa = 2.5;          ///< cavity detuning drawn uniform on +-jitter_kappa * kappa
  double zeeman_offset = 0.0;         ///< [rad/us]; set by defaults() to 2 pi 5 MHz
  double zeeman_scale = 1.0;          ///< 0 switches the sublevel off
  double contrast = 1.0;              ///< g2 -> 1 + contrast (g2 - 1)
  double cutoff = 0.01;               ///< atoms below cutoff * g_max are dropped
  std::size_t realizations = 200;
  std::uint64_t seed = 1;
  unsigned workers = 0;               ///< 0: hardware concurrency

  static BeamConfig defaults();
  static BeamConfig from_config(const Config& cfg);
  /// Throws InputError unless the target lies in [0.05, 50], realizations >= 1,
  /// zeeman_scale in [0, 1], contrast in (0, 1] and cutoff in [0, 1).
  void validate() const;
};

/// Mean of (g/g_max)^2 per sampled atom, with atoms under the cutoff counting as
/// zero. Uses `pilot_points` uniform draws from a fixed internal seed.
double mean_squared_coupling(const ModeGeometry& geom, double cutoff, std::size_t pilot_points = 200000);

/// Poisson mean of the atom number in the box that gives the target mean N_eff.
/// Throws NumericalError when the mean squared coupling is below 1e-6.
double calibrate_density(const ModeGeometry& geom, double target_n_eff, double cutoff = 0.01,
                         std::size_t pilot_points = 200000);

/// One beam realization. `volumetric_mean` comes from calibrate_density.
AtomRealization sample_realization(const ModeGeometry& geom, const BeamConfig& cfg, const RateParams& params,
                                   double volumetric_mean, std::uint64_t seed);

/// Realizations for cfg.realizations consecutive counter-derived seeds.
std::vector<AtomRealization> sample_ensemble(const ModeGeometry& geom, const BeamConfig& cfg,
                                             const RateParams& params);

/// g2 of each realization; every atom is its own emitter class.
std::vector<Eigen::VectorXd> realization_g2(std::span<const AtomRealization> realizations, const RateParams& params,
                                            std::span<const double> tau_grid, unsigned workers = 0);

/// Mean of equally weighted curves with the standard error of the mean, both
/// scaled by the contrast.
CorrelationTrace average_curves(std::span<const Eigen::VectorXd> curves, std::span<const double> tau_grid,
                                double contrast = 1.0);

/// realization_g2 followed by average_curves.
CorrelationTrace averaged_g2(std::span<const AtomRealization> realizations, const RateParams& params,
                             std::span<const double> tau_grid, double contrast = 1.0, unsigned workers = 0);
CorrelationTrace averaged_g2(const ModeGeometry& geom, const BeamConfig& cfg, const RateParams& params,
                             std::span<const double> tau_grid);

struct AveragedKernel {
  std::vector<double> t;
  std::vector<std::complex<double>> mean;  ///< E[G(t)]
  std::vector<double> mean_sq;             ///< E[|G(t)|^2]
};

AveragedKernel averaged_kernel(std::span<const AtomRealization> realizations, const RateParams& params,
                               std::span<const double> t_grid, unsigned workers = 0);
AveragedKernel averaged_kernel(const ModeGeometry& geom, const BeamConfig& cfg, const RateParams& params,
                               std::span<const double> t_grid);

}  // namespace cqed
