#include "cqed/model.hpp"

#include <string>

#include "cqed/error.hpp"
#include "cqed/units.hpp"

namespace cqed {

RateParams RateParams::from_mhz(double g_mhz, double kappa_mhz, double gamma_mhz, double eps_over_kappa,
                                double delta_c_mhz, double delta_a_mhz) {
  RateParams p;
  p.g_max = mhz_to_rad_per_us(g_mhz);
  p.kappa = mhz_to_rad_per_us(kappa_mhz);
  p.gamma = mhz_to_rad_per_us(gamma_mhz);
  p.eps = eps_over_kappa * p.kappa;
  p.delta_c = mhz_to_rad_per_us(delta_c_mhz);
  p.delta_a = mhz_to_rad_per_us(delta_a_mhz);
  return p;
}

RateParams RateParams::reference() { return from_mhz(3.2, 4.5, 6.0); }

RateParams RateParams::from_config(const Config& cfg) {
  RateParams p = from_mhz(cfg.get_double("g_mhz", 3.2), cfg.get_double("kappa_mhz", 4.5),
                          cfg.get_double("gamma_mhz", 6.0), cfg.get_double("eps_over_kappa", 0.05),
                          cfg.get_double("delta_c_mhz", 0.0), cfg.get_double("delta_a_mhz", 0.0));
  p.validate();
  return p;
}

void RateParams::validate() const {
  if (!(g_max > 0.0)) throw InputError("g must be positive");
  if (!(kappa > 0.0)) throw InputError("kappa must be positive");
  if (!(gamma > 0.0)) throw InputError("gamma must be positive");
  if (!(eps >= 0.0)) throw InputError("drive amplitude must be non-negative");
  if (!std::isfinite(delta_c) || !std::isfinite(delta_a)) throw InputError("detunings must be finite");
}

void RateParams::require_weak_drive() const {
  validate();
  if (eps / kappa > kWeakDriveLimit)
    throw InputError("drive eps/kappa = " + std::to_string(eps / kappa) + " exceeds the weak-drive limit 0.2");
}

DerivedParams derive(const RateParams& params, double n_atoms) {
  params.validate();
  if (!(n_atoms >= 0.0)) throw InputError("atom number must be non-negative");
  DerivedParams d;
  const double g2 = params.g_max * params.g_max;
  d.n_atoms = n_atoms;
  d.c1 = g2 / (params.kappa * params.gamma);
  d.c = n_atoms * d.c1;
  d.c1_prime = d.c1 / (1.0 + params.gamma / (2.0 * params.kappa));
  d.n_sat = params.gamma * params.gamma / (3.0 * g2);
  const double denom = 1.0 + 2.0 * d.c - 2.0 * d.c1_prime;
  if (std::abs(denom) < 1e-12) throw NumericalError("singular parameters: 1 + 2C - 2C1' vanishes");
  d.delta_alpha_ratio = -2.0 * d.c1_prime * (2.0 * d.c / denom);
  const double half_diff = (params.kappa - params.gamma / 2.0) / 2.0;
  d.omega_vr = std::sqrt(std::complex<double>(half_diff * half_diff - g2 * n_atoms, 0.0));
  d.collective_coupling = params.g_max * std::sqrt(n_atoms);
  return d;
}

std::pair<double, double> purcell_rates(const RateParams& params, double n_atoms) {
  const double c = n_atoms * params.g_max * params.g_max / (params.kappa * params.gamma);
  return {params.gamma * (1.0 + 2.0 * c), params.kappa * (1.0 + 2.0 * c)};
}

double oscillation_threshold(const RateParams& params) {
  const double half_diff = (params.kappa - params.gamma / 2.0) / 2.0;
  return half_diff * half_diff / (params.g_max * params.g_max);
}

double atom_number_for_rabi_frequency(const RateParams& params, double omega_vr_abs) {
  const double half_diff = (params.kappa - params.gamma / 2.0) / 2.0;
  return (half_diff * half_diff + omega_vr_abs * omega_vr_abs) / (params.g_max * params.g_max);
}

double rabi_oscillation_frequency(const RateParams& params, double n_atoms) {
  const double half_diff = (params.kappa - params.gamma / 2.0) / 2.0;
  const double w2 = params.g_max * params.g_max * n_atoms - half_diff * half_diff;
  return w2 > 0.0 ? std::sqrt(w2) : 0.0;
}

CorrelationTrace g2_closed_form(const RateParams& params, const DerivedParams& derived,
                                const Eigen::Ref<const Eigen::VectorXd>& tau_grid) {
  if (!params.resonant())
    throw InputError("closed-form g2 holds only on resonance; use the dynamics module for detuned systems");
  CorrelationTrace trace;
  trace.tau = tau_grid;
  trace.g2.resize(tau_grid.size());
  for (Eigen::Index i = 0; i < tau_grid.size(); ++i) {
    if (!std::isfinite(tau_grid[i])) throw InputError("non-finite delay in grid");
    trace.g2[i] = closed_form_g2(params.kappa, params.gamma, derived.delta_alpha_ratio, derived.omega_vr,
                                 std::abs(tau_grid[i]));
  }
  trace.metadata["model"] = "closed-form";
  trace.metadata["n_atoms"] = format_double(derived.n_atoms);
  return trace;
}

}  // namespace cqed
