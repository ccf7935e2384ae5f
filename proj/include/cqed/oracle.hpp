#pragma once

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <vector>

#include "cqed/model.hpp"
#include "cqed/trace.hpp"

namespace cqed::oracle {

using cdouble = std::complex<double>;

/// An individually tracked two-level atom.
struct Atom {
  double coupling = 0.0;  ///< g_i [rad/us]
  double detuning = 0.0;  ///< atom - drive detuning [rad/us]
};

inline constexpr std::size_t kMaxAtoms = 4;

/// Number states |n; S> with n photons and a set S of excited atoms, truncated
/// at two total excitations.
///
/// Index order:
///   0                        |0; {}>
///   1                        |1; {}>
///   2 .. 1+N                 |0; {j}>
///   2+N                      |2; {}>
///   3+N .. 2+2N              |1; {j}>
///   3+2N ..                  |0; {i,j}>, i < j, lexicographic
class TruncatedBasis {
 public:
  explicit TruncatedBasis(std::size_t n_atoms);

  std::size_t n_atoms() const { return n_atoms_; }
  Eigen::Index dim() const { return dim_; }

  Eigen::Index vacuum() const { return 0; }
  Eigen::Index photon(int n) const;             ///< |n; {}>, n in 0..2
  Eigen::Index excited(std::size_t j) const;    ///< |0; {j}>
  Eigen::Index photon_excited(std::size_t j) const;  ///< |1; {j}>
  Eigen::Index excited_pair(std::size_t i, std::size_t j) const;  ///< |0; {i,j}>
  int excitations(Eigen::Index index) const;

  /// Truncated annihilation operator of the cavity mode.
  Eigen::MatrixXcd annihilation() const;
  /// Lowering operator of atom j.
  Eigen::MatrixXcd lowering(std::size_t j) const;
  /// Projector onto the sector with exactly `k` excitations.
  Eigen::MatrixXcd sector_projector(int k) const;

 private:
  std::size_t n_atoms_;
  Eigen::Index dim_;
};

/// Dense density matrix with invariant checks.
struct DensityOperator {
  Eigen::MatrixXcd rho;

  double hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }
  double trace_error() const { return std::abs(rho.trace() - cdouble(1.0, 0.0)); }
  double min_eigenvalue() const;
  /// Throws NumericalError unless Hermitian to 1e-12, unit trace to 1e-10 and
  /// eigenvalues >= -1e-9.
  void check_invariants() const;
};

/// Throws InputError when more than four atoms or eps/kappa > 0.2 are requested.
void check_scope(const RateParams& params, std::span<const Atom> atoms);

/// Right-hand side of the master equation in the truncated space.
Eigen::MatrixXcd liouvillian_apply(const RateParams& params, std::span<const Atom> atoms, const Eigen::MatrixXcd& rho);

/// The same generator as a d^2 x d^2 superoperator acting on column-major vec(rho).
Eigen::MatrixXcd liouvillian_matrix(const RateParams& params, std::span<const Atom> atoms);

/// Stationary state by a null-space solve with a trace constraint. Throws
/// NumericalError if max |d rho/dt| stays above 1e-12.
DensityOperator steady_state(const RateParams& params, std::span<const Atom> atoms);

/// Quantum regression: g2(tau) = Tr[a^dag a e^{L tau} rho_c] / <a^dag a>_ss with
/// rho_c = a rho_ss a^dag / <a^dag a>_ss. Invariants of the evolved state are
/// checked at every output point.
CorrelationTrace g2_exact(const RateParams& params, std::span<const Atom> atoms, std::span<const double> tau_grid);

enum class KernelStart {
  Regression,  ///< normalized field deviation after a photon detection
  BareCavity   ///< |1; {}>
};

/// Field amplitude evolved under the undriven one-excitation block of the
/// effective Hamiltonian, from the chosen initial state. The regression start is
/// derived independently here from perturbative pure-state amplitudes built out
/// of the basis operators.
std::vector<cdouble> nonmarkov_exact_kernel(const RateParams& params, std::span<const Atom> atoms,
                                            std::span<const double> t_grid,
                                            KernelStart start = KernelStart::Regression);

/// Weak-drive pure-state amplitudes psi = |0> + psi1 + psi2 at the drive in `params`,
/// obtained from the effective non-Hermitian Hamiltonian.
struct PerturbativeState {
  Eigen::VectorXcd first;   ///< one-excitation sector amplitudes (full-basis vector)
  Eigen::VectorXcd second;  ///< two-excitation sector amplitudes (full-basis vector)
};
PerturbativeState perturbative_state(const RateParams& params, std::span<const Atom> atoms);

/// Effective Hamiltonian H - i/2 sum C^dag C (drive included) and the jump
/// operators C: sqrt(2 kappa) a first, then sqrt(gamma) sigma_j per atom.
struct Unraveling {
  TruncatedBasis basis;
  Eigen::MatrixXcd h_eff;
  std::vector<Eigen::MatrixXcd> jumps;
};
Unraveling unraveling(const RateParams& params, std::span<const Atom> atoms);

}  // namespace cqed::oracle
