#pragma once

#include <Eigen/Dense>
#include <complex>
#include <limits>
#include <span>
#include <vector>

#include "cqed/atoms.hpp"
#include "cqed/model.hpp"
#include "cqed/ode.hpp"
#include "cqed/trace.hpp"

namespace cqed {

using cdouble = std::complex<double>;

/// A group of atoms sharing one detuning, seen by the cavity through its bright
/// mode with collective coupling sqrt(sum g_i^2).
///
/// `atom_count` enters only the two-excitation sector: it is the number of
/// identical atoms that make up the class, and sets how strongly a single atom
/// saturates. For atoms with unequal couplings it is the participation number
/// (sum g^2)^2 / sum g^4, which is exact only when the couplings are equal.
/// An individually tracked atom is a class with atom_count = 1.
struct DetuningClass {
  double coupling = 0.0;   ///< G_k [rad/us]
  double detuning = 0.0;   ///< Delta_k [rad/us]
  double atom_count = 1.0; ///< may be fractional; +inf means no saturation

  /// n identical atoms of single-atom coupling g.
  static DetuningClass identical(double g, double n, double detuning = 0.0) {
    return {g * std::sqrt(n), detuning, n > 0.0 ? n : 1.0};
  }
};

struct OneExcitationState {
  cdouble a1;
  Eigen::VectorXcd b;  ///< one polarization amplitude per class
};

/// Second-order (two-excitation) amplitudes in the Fock convention a|2> = sqrt(2)|1>.
struct TwoExcitationState {
  cdouble a20;          ///< two photons
  Eigen::VectorXcd a1b; ///< one photon + class k excited
  Eigen::VectorXcd bb;  ///< two excitations in classes (k, l), k <= l, packed row-major

  static Eigen::Index pair_index(Eigen::Index k, Eigen::Index l, Eigen::Index num_classes) {
    if (k > l) std::swap(k, l);
    return k * num_classes - k * (k - 1) / 2 + (l - k);
  }
};

/// Classes by label with collective couplings; empty input yields one class with G = 0.
std::vector<DetuningClass> reduce_to_classes(const AtomRealization& realization);
/// One class per atom (atom_count = 1): the exact second-order description.
std::vector<DetuningClass> resolve_emitters(const AtomRealization& realization);
/// Rates with the realization's cavity detuning applied.
RateParams apply_realization(const RateParams& params, const AtomRealization& realization);

/// Coefficient matrix M of x' = M x + f with x = (a1, b_1 .. b_K).
Eigen::MatrixXcd one_excitation_matrix(const RateParams& params, std::span<const DetuningClass> classes);

/// Solves the driven equations from vacuum on an ascending grid starting at 0.
std::vector<OneExcitationState> integrate_driven(const RateParams& params, std::span<const DetuningClass> classes,
                                                 std::span<const double> t_grid, const IntegratorOptions& opts = {});

/// Evolves `initial` under the undriven equations.
std::vector<OneExcitationState> propagate_homogeneous(const RateParams& params,
                                                      std::span<const DetuningClass> classes,
                                                      const OneExcitationState& initial,
                                                      std::span<const double> t_grid,
                                                      const IntegratorOptions& opts = {});

/// Direct linear solve of the driven steady state.
OneExcitationState steady_one_excitation(const RateParams& params, std::span<const DetuningClass> classes);

struct SecondOrderSteadyState {
  OneExcitationState first;
  TwoExcitationState second;
  double residual = 0.0;  ///< relative residual of the full linear system
};

/// Steady amplitudes through second order in the drive.
SecondOrderSteadyState steady_two_excitation(const RateParams& params, std::span<const DetuningClass> classes);

/// State immediately after a photon detection, normalized to unit vacuum amplitude:
/// a1 = sqrt(2) a20 / a1_ss, b_k = a1b_k / a1_ss.
OneExcitationState conditioned_state(const SecondOrderSteadyState& steady);

/// Merges classes with identical detunings into their common bright mode,
/// projecting each listed state accordingly. Exact for the field amplitude.
std::vector<DetuningClass> merge_equal_detunings(std::span<const DetuningClass> classes,
                                                 std::vector<OneExcitationState*> states);

/// Regression kernel G(t): the field deviation from steady state after a photon
/// detection, normalized to G(0) = 1. For a single resonant class this is the
/// closed-form kernel. Without coupled atoms it is the bare cavity decay.
std::vector<cdouble> response_kernel(const RateParams& params, std::span<const DetuningClass> classes,
                                     std::span<const double> t_grid, const IntegratorOptions& opts = {});

/// Initial state (a1 = 1, b_k) of the regression kernel.
OneExcitationState kernel_initial_state(const RateParams& params, std::span<const DetuningClass> classes);

/// g2(tau) from conditioned evolution of the photon-collapsed state.
CorrelationTrace g2_regression(const RateParams& params, std::span<const DetuningClass> classes,
                               std::span<const double> tau_grid);

struct TransmissionSpectrum {
  Eigen::VectorXd drive_detuning;  ///< [rad/us]
  Eigen::VectorXd intensity;       ///< |a1_ss|^2
  std::vector<double> peaks;       ///< refined peak positions, ascending [rad/us]
  double separation = 0.0;         ///< distance between the two strongest peaks
  bool split = false;              ///< false when fewer than two peaks were found
};

/// Steady transmission while the drive is scanned with cavity and atoms held at
/// their relative detunings.
TransmissionSpectrum transmission_spectrum(const RateParams& params, std::span<const DetuningClass> classes,
                                           std::span<const double> drive_detuning_grid);

}  // namespace cqed
