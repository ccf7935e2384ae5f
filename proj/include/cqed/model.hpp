#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <utility>

#include "cqed/config.hpp"
#include "cqed/trace.hpp"

namespace cqed {

/// System rates in rad/us. kappa is the cavity field decay rate and gamma the
/// atomic population decay rate, so the atomic polarization decays at gamma/2.
struct RateParams {
  double g_max = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  double eps = 0.0;      ///< drive amplitude
  double delta_c = 0.0;  ///< cavity - drive detuning
  double delta_a = 0.0;  ///< atom - drive detuning

  /// Builds rates from ordinary frequencies in MHz; eps is given relative to kappa.
  static RateParams from_mhz(double g_mhz, double kappa_mhz, double gamma_mhz, double eps_over_kappa = 0.05,
                             double delta_c_mhz = 0.0, double delta_a_mhz = 0.0);
  /// (g, kappa, gamma)/2pi = (3.2, 4.5, 6.0) MHz, eps = 0.05 kappa, resonant.
  static RateParams reference();
  static RateParams from_config(const Config& cfg);

  /// Throws InputError unless g_max, kappa, gamma > 0 and eps >= 0.
  void validate() const;
  /// Throws InputError unless eps/kappa <= 0.2.
  void require_weak_drive() const;
  bool resonant() const { return delta_c == 0.0 && delta_a == 0.0; }
};

inline constexpr double kWeakDriveLimit = 0.2;

struct DerivedParams {
  double n_atoms = 0.0;
  double c1 = 0.0;         ///< single-atom cooperativity g^2/(kappa gamma)
  double c = 0.0;          ///< N c1
  double c1_prime = 0.0;   ///< c1 / (1 + gamma/(2 kappa))
  double n_sat = 0.0;      ///< gamma^2 / (3 g^2)
  double delta_alpha_ratio = 0.0;
  std::complex<double> omega_vr;  ///< sqrt(((kappa - gamma/2)/2)^2 - g^2 N), principal branch
  double collective_coupling = 0.0;  ///< g sqrt(N); not the same quantity as omega_vr
};

DerivedParams derive(const RateParams& params, double n_atoms);

/// (gamma (1 + 2C), kappa (1 + 2C)).
std::pair<double, double> purcell_rates(const RateParams& params, double n_atoms);

/// Atom number at which omega_vr^2 changes sign.
double oscillation_threshold(const RateParams& params);

/// Inverse of the omega_vr relation on the oscillatory branch: the atom number
/// whose |omega_vr| equals `omega_vr_abs`.
double atom_number_for_rabi_frequency(const RateParams& params, double omega_vr_abs);

/// Oscillation frequency |Im omega_vr| (zero in the overdamped regime).
double rabi_oscillation_frequency(const RateParams& params, double n_atoms);

/// sinh(z)/z, with a series for small |z|.
template <typename Scalar>
std::complex<Scalar> sinhc(const std::complex<Scalar>& z) {
  if (std::abs(z) < Scalar(1e-4)) {
    const auto z2 = z * z;
    return Scalar(1) + z2 / Scalar(6) + z2 * z2 / Scalar(120);
  }
  return std::sinh(z) / z;
}

/// Regression kernel of the closed-form correlation function:
///   exp(-s tau) [cosh(W tau) + s sinh(W tau)/W],  s = (kappa + gamma/2)/2.
///
/// Evaluated through the two exponentials exp((+-W - s) tau) so that large
/// real W tau cannot overflow; near W tau = 0 a series is used instead.
template <typename Scalar>
Scalar closed_form_kernel(Scalar kappa, Scalar gamma, const std::complex<Scalar>& omega_vr, Scalar tau) {
  using C = std::complex<Scalar>;
  const Scalar s = (kappa + gamma / Scalar(2)) / Scalar(2);
  const C wt = omega_vr * tau;
  if (std::abs(wt) < Scalar(1e-4)) {
    const C cosh_series = Scalar(1) + wt * wt / Scalar(2) + wt * wt * wt * wt / Scalar(24);
    return (std::exp(-s * tau) * (cosh_series + s * tau * sinhc(wt))).real();
  }
  const C up = std::exp((omega_vr - s) * tau);
  const C down = std::exp((-omega_vr - s) * tau);
  return (Scalar(0.5) * (up + down) + s * (up - down) / (Scalar(2) * omega_vr)).real();
}

/// Closed-form g2 at a single delay: {1 + (dalpha/alpha) K(tau)}^2.
template <typename Scalar>
Scalar closed_form_g2(Scalar kappa, Scalar gamma, Scalar delta_alpha_ratio, const std::complex<Scalar>& omega_vr,
                      Scalar tau) {
  const Scalar inner = Scalar(1) + delta_alpha_ratio * closed_form_kernel(kappa, gamma, omega_vr, tau);
  return inner * inner;
}

/// Closed-form g2 on a delay grid. Only defined on resonance: throws InputError
/// for nonzero detunings (use the dynamics module there).
CorrelationTrace g2_closed_form(const RateParams& params, const DerivedParams& derived,
                                const Eigen::Ref<const Eigen::VectorXd>& tau_grid);

}  // namespace cqed
