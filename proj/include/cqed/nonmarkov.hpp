#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "cqed/atoms.hpp"
#include "cqed/dynamics.hpp"
#include "cqed/ensemble.hpp"
#include "cqed/model.hpp"

namespace cqed {

/// G(t) = sum_j c_j exp(lambda_j t), the field kernel of one realization.
struct ExpSum {
  std::vector<cdouble> coeff;
  std::vector<cdouble> rate;

  cdouble value(double t) const;
  cdouble derivative(double t) const;
  /// Largest Re(lambda); the sum decays at least this fast.
  double slowest_decay() const;
};

/// Field kernel of the given classes as an exponential sum (equal detunings are
/// merged first, which is exact for the field).
ExpSum kernel_expansion(const RateParams& params, std::span<const DetuningClass> classes);

/// Qubit channel on the {|0>, |1>} photon-number subspace: coherences scale with
/// G(t), the excited population with P(t). Built from one or more kernels:
/// G = E[g_r], P = E[|g_r|^2].
class ReducedChannel {
 public:
  explicit ReducedChannel(std::vector<ExpSum> kernels);

  /// Single realization (P = |G|^2).
  static ReducedChannel single(const RateParams& params, std::span<const DetuningClass> classes);
  /// Equally weighted mixture over realizations; every atom its own class.
  static ReducedChannel averaged(const RateParams& params, std::span<const AtomRealization> realizations,
                                 unsigned workers = 0);

  struct Sample {
    cdouble g, dg;
    double p, dp;
  };
  Sample at(double t) const;
  /// Time by which every kernel has decayed below 1e-12.
  double horizon() const;
  /// Fastest oscillation or decay rate among the kernels [1/us].
  double fastest_rate() const;
  std::size_t size() const { return kernels_.size(); }

 private:
  std::vector<ExpSum> kernels_;
};

/// Antipodal pure states with Bloch vectors +-(sin theta cos phi, sin theta sin phi, cos theta).
/// The trace distance does not depend on phi for this channel.
struct StatePair {
  double theta = 0.0;  ///< in [0, pi/2]
  double phi = 0.0;
};

/// D(t) = sqrt(P^2 cos^2 theta + |G|^2 sin^2 theta)
double trace_distance(const ReducedChannel& ch, const StatePair& pair, double t);
double trace_distance_rate(const ReducedChannel& ch, const StatePair& pair, double t);
std::vector<double> trace_distance_curve(const ReducedChannel& ch, const StatePair& pair, std::span<const double> t);

struct BlpResult {
  double measure = 0.0;      ///< maximized over pairs (extrema sum)
  double quadrature = 0.0;   ///< integral of the positive rate at the maximizing pair
  double theta = 0.0;        ///< maximizing pair
  double population_pair = 0.0;  ///< measure for theta = 0
  double coherence_pair = 0.0;   ///< measure for theta = pi/2
};

/// Sum of increases of D between its successive extrema for one pair.
double blp_increase_sum(const ReducedChannel& ch, const StatePair& pair);
/// Integral of max(0, dD/dt) by adaptive Gauss-Kronrod quadrature.
double blp_positive_rate_integral(const ReducedChannel& ch, const StatePair& pair);

/// BLP measure maximized over antipodal pure pairs: a 64-point theta grid plus
/// golden-section refinement. Throws NumericalError if the two evaluation paths
/// disagree by more than 1e-6.
BlpResult blp_measure(const ReducedChannel& ch);

struct BlpCurvePoint {
  double n_eff = 0.0;
  double omega_vr_mhz = 0.0;  ///< oscillation frequency |Im omega_vr| / 2 pi (0 when overdamped)
  BlpResult averaged;
  BlpResult max_coupled;
};

/// Averaged variant: beam realizations at each mean N_eff. Maximally coupled
/// variant: N_eff identical atoms at g_max. N_eff = 0 means an empty cavity.
std::vector<BlpCurvePoint> blp_vs_coupling(const ModeGeometry& geom, const BeamConfig& beam, const RateParams& params,
                                           std::span<const double> n_eff_grid);

}  // namespace cqed
