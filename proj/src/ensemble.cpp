#include "cqed/ensemble.hpp"

#include <cmath>
#include <random>

#include "cqed/dynamics.hpp"
#include "cqed/error.hpp"
#include "cqed/parallel.hpp"
#include "cqed/units.hpp"

namespace cqed {

double ModeGeometry::relative_coupling(const Eigen::Vector3d& r) const {
  const double rho2 = r.x() * r.x() + r.y() * r.y();
  return std::exp(-rho2 / (waist_um * waist_um)) * std::abs(std::cos(kTwoPi * r.z() / wavelength_um));
}

void ModeGeometry::validate() const {
  if (!(waist_um > 0.0)) throw InputError("mode waist must be positive");
  if (!(wavelength_um > 0.0)) throw InputError("wavelength must be positive");
  if (!(half_x_um >= 2.0 * waist_um) || !(half_y_um >= 2.0 * waist_um))
    throw InputError("sampling box must extend at least two waists from the axis");
  if (!(z_extent_um >= wavelength_um)) throw InputError("sampling box must span at least one wavelength along z");
}

ModeGeometry ModeGeometry::from_config(const Config& cfg) {
  ModeGeometry g;
  g.waist_um = cfg.get_double("geometry.waist_um", g.waist_um);
  g.wavelength_um = cfg.get_double("geometry.wavelength_um", g.wavelength_um);
  g.half_x_um = cfg.get_double("geometry.half_x_um", 2.0 * g.waist_um);
  g.half_y_um = cfg.get_double("geometry.half_y_um", 2.0 * g.waist_um);
  g.z_extent_um = cfg.get_double("geometry.z_extent_um", 2.0 * g.wavelength_um);
  g.validate();
  return g;
}

BeamConfig BeamConfig::defaults() {
  BeamConfig c;
  c.zeeman_offset = mhz_to_rad_per_us(5.0);
  return c;
}

BeamConfig BeamConfig::from_config(const Config& cfg) {
  BeamConfig c = defaults();
  c.target_n_eff = cfg.get_double("beam.target_n_eff", c.target_n_eff);
  c.jitter_kappa = cfg.get_double("beam.jitter_kappa", c.jitter_kappa);
  c.zeeman_offset = mhz_to_rad_per_us(cfg.get_double("beam.zeeman_offset_mhz", 5.0));
  c.zeeman_scale = cfg.get_double("beam.zeeman_scale", c.zeeman_scale);
  c.contrast = cfg.get_double("beam.contrast", c.contrast);
  c.cutoff = cfg.get_double("beam.cutoff", c.cutoff);
  c.realizations = cfg.get_u64("beam.realizations", c.realizations);
  c.seed = cfg.get_u64("seed", cfg.get_u64("beam.seed", c.seed));
  c.workers = static_cast<unsigned>(cfg.get_u64("workers", 0));
  c.validate();
  return c;
}

void BeamConfig::validate() const {
  if (!(target_n_eff >= 0.05 && target_n_eff <= 50.0))
    throw InputError("target N_eff must lie in [0.05, 50]");
  if (realizations < 1) throw InputError("at least one realization is required");
  if (!(jitter_kappa >= 0.0)) throw InputError("detuning jitter must be non-negative");
  if (!(zeeman_scale >= 0.0 && zeeman_scale <= 1.0)) throw InputError("Zeeman coupling scale must lie in [0, 1]");
  if (!std::isfinite(zeeman_offset)) throw InputError("Zeeman offset must be finite");
  if (!(contrast > 0.0 && contrast <= 1.0)) throw InputError("contrast must lie in (0, 1]");
  if (!(cutoff >= 0.0 && cutoff < 1.0)) throw InputError("coupling cutoff must lie in [0, 1)");
}

namespace {

Eigen::Vector3d draw_position(const ModeGeometry& geom, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = (2.0 * u(rng) - 1.0) * geom.half_x_um;
  const double y = (2.0 * u(rng) - 1.0) * geom.half_y_um;
  const double z = u(rng) * geom.z_extent_um;
  return {x, y, z};
}

}  // namespace

double mean_squared_coupling(const ModeGeometry& geom, double cutoff, std::size_t pilot_points) {
  if (!(geom.waist_um > 0.0) || !(geom.wavelength_um > 0.0)) throw InputError("mode waist and wavelength must be positive");
  if (pilot_points < 100000) throw InputError("calibration needs at least 1e5 pilot points");
  std::mt19937_64 rng(0x5eed'ca1bULL);
  CompensatedSum sum;
  for (std::size_t i = 0; i < pilot_points; ++i) {
    const double u = geom.relative_coupling(draw_position(geom, rng));
    if (u >= cutoff) sum.add(u * u);
  }
  return sum.value() / static_cast<double>(pilot_points);
}

double calibrate_density(const ModeGeometry& geom, double target_n_eff, double cutoff, std::size_t pilot_points) {
  if (!(target_n_eff >= 0.0)) throw InputError("target N_eff must be non-negative");
  const double m = mean_squared_coupling(geom, cutoff, pilot_points);
  if (!(m >= 1e-6)) throw NumericalError("mean squared coupling " + std::to_string(m) + " is below 1e-6; degenerate geometry");
  return target_n_eff / m;
}

AtomRealization sample_realization(const ModeGeometry& geom, const BeamConfig& cfg, const RateParams& params,
                                   double volumetric_mean, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AtomRealization r;
  r.g_max = params.g_max;
  r.class_detunings = {params.delta_a};
  const bool zeeman = cfg.zeeman_scale > 0.0;
  if (zeeman) r.class_detunings.push_back(params.delta_a + cfg.zeeman_offset);

  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  r.cavity_detuning = cfg.jitter_kappa * params.kappa * jitter(rng);

  std::poisson_distribution<long> count(volumetric_mean);
  const long n = volumetric_mean > 0.0 ? count(rng) : 0;
  for (long i = 0; i < n; ++i) {
    const Eigen::Vector3d pos = draw_position(geom, rng);
    const double u = geom.relative_coupling(pos);
    if (u < cfg.cutoff || u == 0.0) continue;
    r.atoms.push_back({pos, params.g_max * u, 0});
  }
  if (zeeman) {
    const std::size_t bare = r.atoms.size();
    for (std::size_t i = 0; i < bare; ++i) {
      AtomSite copy = r.atoms[i];
      copy.coupling *= cfg.zeeman_scale;
      copy.label = 1;
      r.atoms.push_back(copy);
    }
  }
  return r;
}

std::vector<AtomRealization> sample_ensemble(const ModeGeometry& geom, const BeamConfig& cfg,
                                             const RateParams& params) {
  geom.validate();
  cfg.validate();
  const double mean = calibrate_density(geom, cfg.target_n_eff, cfg.cutoff);
  std::vector<AtomRealization> out(cfg.realizations);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sample_realization(geom, cfg, params, mean, mix_seed(cfg.seed, i));
  return out;
}

std::vector<Eigen::VectorXd> realization_g2(std::span<const AtomRealization> realizations, const RateParams& params,
                                            std::span<const double> tau_grid, unsigned workers) {
  params.require_weak_drive();
  std::vector<Eigen::VectorXd> curves(realizations.size());
  parallel_for(realizations.size(), workers, [&](std::size_t i) {
    const auto& r = realizations[i];
    auto classes = resolve_emitters(r);
    if (classes.empty()) classes.push_back({0.0, r.class_detunings.front(), 1.0});
    curves[i] = g2_regression(apply_realization(params, r), classes, tau_grid).g2;
  });
  return curves;
}

CorrelationTrace average_curves(std::span<const Eigen::VectorXd> curves, std::span<const double> tau_grid,
                                double contrast) {
  if (curves.empty()) throw InputError("no realizations to average");
  if (!(contrast > 0.0 && contrast <= 1.0)) throw InputError("contrast must lie in (0, 1]");
  const auto n_tau = static_cast<Eigen::Index>(tau_grid.size());
  for (const auto& c : curves)
    if (c.size() != n_tau) throw InputError("curve length does not match the delay grid");

  // Summation runs in realization order so the result does not depend on the worker count.
  const double n = static_cast<double>(curves.size());
  CorrelationTrace out;
  out.tau = Eigen::Map<const Eigen::VectorXd>(tau_grid.data(), n_tau);
  out.g2.resize(n_tau);
  out.stderr_.resize(n_tau);
  for (Eigen::Index j = 0; j < n_tau; ++j) {
    CompensatedSum s;
    for (const auto& c : curves) s.add(c[j]);
    const double mean = s.value() / n;
    CompensatedSum v;
    for (const auto& c : curves) v.add((c[j] - mean) * (c[j] - mean));
    const double se = curves.size() > 1 ? std::sqrt(v.value() / (n - 1.0) / n) : 0.0;
    out.g2[j] = 1.0 + contrast * (mean - 1.0);
    out.stderr_[j] = contrast * se;
  }
  out.metadata["model"] = "ensemble";
  out.metadata["realizations"] = std::to_string(curves.size());
  return out;
}

CorrelationTrace averaged_g2(std::span<const AtomRealization> realizations, const RateParams& params,
                             std::span<const double> tau_grid, double contrast, unsigned workers) {
  if (realizations.empty()) throw InputError("no realizations to average");
  const auto curves = realization_g2(realizations, params, tau_grid, workers);
  return average_curves(curves, tau_grid, contrast);
}

CorrelationTrace averaged_g2(const ModeGeometry& geom, const BeamConfig& cfg, const RateParams& params,
                             std::span<const double> tau_grid) {
  const auto ens = sample_ensemble(geom, cfg, params);
  auto out = averaged_g2(ens, params, tau_grid, cfg.contrast, cfg.workers);
  out.metadata["target_n_eff"] = format_double(cfg.target_n_eff);
  out.metadata["seed"] = std::to_string(cfg.seed);
  return out;
}

AveragedKernel averaged_kernel(std::span<const AtomRealization> realizations, const RateParams& params,
                               std::span<const double> t_grid, unsigned workers) {
  params.validate();
  if (realizations.empty()) throw InputError("no realizations to average");
  std::vector<std::vector<cdouble>> kernels(realizations.size());
  parallel_for(realizations.size(), workers, [&](std::size_t i) {
    const auto& r = realizations[i];
    auto classes = resolve_emitters(r);
    if (classes.empty()) classes.push_back({0.0, r.class_detunings.front(), 1.0});
    kernels[i] = response_kernel(apply_realization(params, r), classes, t_grid);
  });

  const double n = static_cast<double>(kernels.size());
  AveragedKernel out;
  out.t.assign(t_grid.begin(), t_grid.end());
  out.mean.resize(t_grid.size());
  out.mean_sq.resize(t_grid.size());
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    CompensatedSum re, im, sq;
    for (const auto& k : kernels) {
      re.add(k[j].real());
      im.add(k[j].imag());
      sq.add(std::norm(k[j]));
    }
    out.mean[j] = {re.value() / n, im.value() / n};
    out.mean_sq[j] = sq.value() / n;
  }
  return out;
}

AveragedKernel averaged_kernel(const ModeGeometry& geom, const BeamConfig& cfg, const RateParams& params,
                               std::span<const double> t_grid) {
  const auto ens = sample_ensemble(geom, cfg, params);
  return averaged_kernel(ens, params, t_grid, cfg.workers);
}

}  // namespace cqed
