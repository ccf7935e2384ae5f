#include "cqed/oracle.hpp"

#include <map>
#include <string>
#include <unsupported/Eigen/MatrixFunctions>

#include "cqed/error.hpp"

namespace cqed::oracle {
namespace {

using Mat = Eigen::MatrixXcd;

struct Operators {
  TruncatedBasis basis;
  Mat a;
  std::vector<Mat> sm;
  Mat h;       // Hermitian Hamiltonian including the drive
  Mat h_eff;   // h - i kappa a^dag a - i gamma/2 sum sigma+ sigma-, without the drive
  Mat drive;   // eps (a^dag - a), the generator piece -i H_drive
};

Operators build(const RateParams& p, std::span<const Atom> atoms) {
  Operators ops{TruncatedBasis(atoms.size()), {}, {}, {}, {}, {}};
  const auto d = ops.basis.dim();
  const cdouble i(0.0, 1.0);
  ops.a = ops.basis.annihilation();
  const Mat ad = ops.a.adjoint();
  const Mat n = ad * ops.a;
  Mat h0 = p.delta_c * n;
  Mat decay = p.kappa * n;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    ops.sm.push_back(ops.basis.lowering(j));
    const Mat& s = ops.sm.back();
    const Mat sp = s.adjoint();
    h0 += atoms[j].detuning * sp * s;
    // Build the exchange term from its own adjoint: a sigma+ and (a^dag sigma-)^dag differ after truncation.
    const Mat raise = ad * s;
    h0 += i * atoms[j].coupling * (raise - raise.adjoint());
    decay += 0.5 * p.gamma * sp * s;
  }
  ops.drive = p.eps * (ad - ops.a);
  ops.h = h0 + i * ops.drive;  // -i H_drive = eps (a^dag - a)
  ops.h_eff = h0 - i * decay;
  (void)d;
  return ops;
}

Eigen::VectorXcd vec(const Mat& m) { return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size()); }

Mat unvec(const Eigen::VectorXcd& v, Eigen::Index d) { return Eigen::Map<const Mat>(v.data(), d, d); }

Mat kron(const Mat& x, const Mat& y) {
  Mat out(x.rows() * y.rows(), x.cols() * y.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) out.block(r * y.rows(), c * y.cols(), y.rows(), y.cols()) = x(r, c) * y;
  return out;
}

}  // namespace

TruncatedBasis::TruncatedBasis(std::size_t n_atoms) : n_atoms_(n_atoms) {
  const auto n = static_cast<Eigen::Index>(n_atoms);
  dim_ = 1 + (1 + n) + (1 + n + n * (n - 1) / 2);
}

Eigen::Index TruncatedBasis::photon(int n) const {
  switch (n) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 2 + static_cast<Eigen::Index>(n_atoms_);
    default: throw InputError("photon number outside the truncated basis");
  }
}

Eigen::Index TruncatedBasis::excited(std::size_t j) const { return 2 + static_cast<Eigen::Index>(j); }

Eigen::Index TruncatedBasis::photon_excited(std::size_t j) const {
  return 3 + static_cast<Eigen::Index>(n_atoms_ + j);
}

Eigen::Index TruncatedBasis::excited_pair(std::size_t i, std::size_t j) const {
  if (i == j) throw InputError("an atom cannot be doubly excited");
  if (i > j) std::swap(i, j);
  const auto n = static_cast<Eigen::Index>(n_atoms_);
  const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
  // pairs (0,1),(0,2),...,(0,n-1),(1,2),...
  const Eigen::Index offset = ii * n - ii * (ii + 1) / 2 + (jj - ii - 1);
  return 3 + 2 * n + offset;
}

int TruncatedBasis::excitations(Eigen::Index index) const {
  const auto n = static_cast<Eigen::Index>(n_atoms_);
  if (index == 0) return 0;
  if (index <= 1 + n) return 1;
  return 2;
}

Eigen::MatrixXcd TruncatedBasis::annihilation() const {
  Mat a = Mat::Zero(dim_, dim_);
  a(photon(0), photon(1)) = 1.0;
  a(photon(1), photon(2)) = std::sqrt(2.0);
  for (std::size_t j = 0; j < n_atoms_; ++j) a(excited(j), photon_excited(j)) = 1.0;
  return a;
}

Eigen::MatrixXcd TruncatedBasis::lowering(std::size_t j) const {
  Mat s = Mat::Zero(dim_, dim_);
  s(vacuum(), excited(j)) = 1.0;
  s(photon(1), photon_excited(j)) = 1.0;
  for (std::size_t k = 0; k < n_atoms_; ++k)
    if (k != j) s(excited(k), excited_pair(j, k)) = 1.0;
  return s;
}

Eigen::MatrixXcd TruncatedBasis::sector_projector(int k) const {
  Mat p = Mat::Zero(dim_, dim_);
  for (Eigen::Index i = 0; i < dim_; ++i)
    if (excitations(i) == k) p(i, i) = 1.0;
  return p;
}

double DensityOperator::min_eigenvalue() const {
  const Mat herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void DensityOperator::check_invariants() const {
  if (hermiticity_error() >= 1e-12) throw NumericalError("density operator lost Hermiticity");
  if (trace_error() >= 1e-10) throw NumericalError("density operator lost unit trace");
  if (min_eigenvalue() < -1e-9) throw NumericalError("density operator lost positivity");
}

void check_scope(const RateParams& params, std::span<const Atom> atoms) {
  params.validate();
  if (atoms.size() > kMaxAtoms) throw InputError("oracle handles at most four atoms");
  if (params.eps / params.kappa > kWeakDriveLimit) throw InputError("oracle requires eps/kappa <= 0.2");
}

Eigen::MatrixXcd liouvillian_apply(const RateParams& params, std::span<const Atom> atoms, const Eigen::MatrixXcd& rho) {
  check_scope(params, atoms);
  const auto ops = build(params, atoms);
  if (rho.rows() != ops.basis.dim() || rho.cols() != ops.basis.dim())
    throw InputError("density matrix dimension does not match the truncated basis");
  const cdouble i(0.0, 1.0);
  Mat out = -i * (ops.h * rho - rho * ops.h);
  const Mat ad = ops.a.adjoint();
  const Mat n = ad * ops.a;
  out += params.kappa * (2.0 * ops.a * rho * ad - n * rho - rho * n);
  for (const auto& s : ops.sm) {
    const Mat sp = s.adjoint();
    const Mat e = sp * s;
    out += 0.5 * params.gamma * (2.0 * s * rho * sp - e * rho - rho * e);
  }
  return out;
}

Eigen::MatrixXcd liouvillian_matrix(const RateParams& params, std::span<const Atom> atoms) {
  check_scope(params, atoms);
  const auto ops = build(params, atoms);
  const auto d = ops.basis.dim();
  const Mat id = Mat::Identity(d, d);
  const cdouble i(0.0, 1.0);
  // vec(X rho Y) = (Y^T kron X) vec(rho)
  Mat l = -i * (kron(id, ops.h) - kron(ops.h.transpose(), id));
  auto dissipator = [&](const Mat& c, double rate) {
    const Mat cdc = c.adjoint() * c;
    l += rate * (kron(c.conjugate(), c) - 0.5 * kron(id, cdc) - 0.5 * kron(cdc.transpose(), id));
  };
  dissipator(ops.a, 2.0 * params.kappa);
  for (const auto& s : ops.sm) dissipator(s, params.gamma);
  return l;
}

DensityOperator steady_state(const RateParams& params, std::span<const Atom> atoms) {
  const Mat l = liouvillian_matrix(params, atoms);
  const auto d = TruncatedBasis(atoms.size()).dim();
  // Replace the first equation by the trace condition.
  Mat system = l;
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(l.rows());
  system.row(0).setZero();
  for (Eigen::Index k = 0; k < d; ++k) system(0, k * d + k) = 1.0;
  rhs[0] = 1.0;
  const auto lu = system.fullPivLu();
  Eigen::VectorXcd x = lu.solve(rhs);
  for (int refine = 0; refine < 2; ++refine) x += lu.solve((rhs - system * x).eval());

  DensityOperator out{unvec(x, d)};
  out.rho = 0.5 * (out.rho + out.rho.adjoint()).eval();
  out.rho /= out.rho.trace();
  const double residual = liouvillian_apply(params, atoms, out.rho).cwiseAbs().maxCoeff();
  if (!(residual < 1e-12))
    throw NumericalError("oracle steady state did not converge (max |d rho/dt| = " + std::to_string(residual) + ")");
  out.check_invariants();
  return out;
}

CorrelationTrace g2_exact(const RateParams& params, std::span<const Atom> atoms, std::span<const double> tau_grid) {
  const auto ss = steady_state(params, atoms);
  const auto ops = build(params, atoms);
  const auto d = ops.basis.dim();
  const Mat ad = ops.a.adjoint();
  const Mat n = ad * ops.a;
  const double intensity = (n * ss.rho).trace().real();
  if (!(intensity > 1e-15)) throw NumericalError("vanishing intracavity intensity; g2 undefined");

  const Mat l = liouvillian_matrix(params, atoms);
  Eigen::VectorXcd state = vec(ops.a * ss.rho * ad / intensity);
  std::map<double, Mat> propagators;
  double t = 0.0;

  CorrelationTrace trace;
  trace.tau.resize(static_cast<Eigen::Index>(tau_grid.size()));
  trace.g2.resize(trace.tau.size());
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    const double dt = tau_grid[k] - t;
    if (dt < 0.0) throw InputError("delay grid must be ascending and non-negative");
    if (dt > 0.0) {
      auto it = propagators.find(dt);
      if (it == propagators.end()) it = propagators.emplace(dt, (l * dt).exp()).first;
      state = it->second * state;
      t = tau_grid[k];
    }
    DensityOperator rho{unvec(state, d)};
    rho.check_invariants();
    trace.tau[static_cast<Eigen::Index>(k)] = tau_grid[k];
    trace.g2[static_cast<Eigen::Index>(k)] = (n * rho.rho).trace().real() / intensity;
  }
  trace.metadata["model"] = "master-equation";
  return trace;
}

PerturbativeState perturbative_state(const RateParams& params, std::span<const Atom> atoms) {
  params.validate();
  if (atoms.size() > kMaxAtoms) throw InputError("oracle handles at most four atoms");
  const auto ops = build(params, atoms);
  const cdouble i(0.0, 1.0);
  const Mat k = -i * ops.h_eff;
  const Mat p1 = ops.basis.sector_projector(1);
  const Mat p2 = ops.basis.sector_projector(2);
  const auto d = ops.basis.dim();
  Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(d);
  vac[ops.basis.vacuum()] = 1.0;

  // Sector blocks of K are invertible; the identity on the complement keeps
  // the full-size solve nonsingular without touching the sector.
  const Mat id = Mat::Identity(d, d);
  auto sector_solve = [&](const Mat& proj, const Eigen::VectorXcd& source) -> Eigen::VectorXcd {
    const Mat block = proj * k * proj + (id - proj);
    return block.fullPivLu().solve((-(proj * source)).eval());
  };
  PerturbativeState out;
  out.first = sector_solve(p1, ops.drive * vac);
  out.second = sector_solve(p2, ops.drive * out.first);
  return out;
}

std::vector<cdouble> nonmarkov_exact_kernel(const RateParams& params, std::span<const Atom> atoms,
                                            std::span<const double> t_grid, KernelStart start) {
  params.validate();
  if (atoms.size() > kMaxAtoms) throw InputError("oracle handles at most four atoms");
  RateParams undriven = params;
  undriven.eps = 0.0;
  const auto ops = build(undriven, atoms);
  const auto& basis = ops.basis;
  const cdouble i(0.0, 1.0);
  const Eigen::Index one_photon = basis.photon(1);

  // one-excitation block, ordered (|1;{}>, |0;{j}>)
  const auto m = static_cast<Eigen::Index>(atoms.size()) + 1;
  std::vector<Eigen::Index> idx{one_photon};
  for (std::size_t j = 0; j < atoms.size(); ++j) idx.push_back(basis.excited(j));
  Mat block(m, m);
  const Mat k = -i * ops.h_eff;
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < m; ++c) block(r, c) = k(idx[r], idx[c]);

  Eigen::VectorXcd init = Eigen::VectorXcd::Zero(m);
  init[0] = 1.0;
  bool coupled = false;
  for (const auto& at : atoms) coupled = coupled || at.coupling > 0.0;
  if (start == KernelStart::Regression && coupled) {
    RateParams unit = params;
    unit.eps = 1.0;
    const auto psi = perturbative_state(unit, atoms);
    const cdouble a10 = psi.first[one_photon];
    if (std::abs(a10) < 1e-300) throw NumericalError("vanishing steady field; kernel undefined");
    // one-excitation part of a psi after detection, normalized to the vacuum amplitude
    const Eigen::VectorXcd collapsed = ops.a * psi.second / a10;
    Eigen::VectorXcd dev(m);
    for (Eigen::Index r = 0; r < m; ++r) dev[r] = collapsed[idx[r]] - psi.first[idx[r]];
    if (std::abs(dev[0]) > 1e-300) init = dev / dev[0];
  }

  std::vector<cdouble> out;
  out.reserve(t_grid.size());
  for (const double t : t_grid) {
    if (t < 0.0) throw InputError("time grid must be non-negative");
    const Eigen::VectorXcd x = (block * t).exp() * init;
    out.push_back(x[0]);
  }
  return out;
}

Unraveling unraveling(const RateParams& params, std::span<const Atom> atoms) {
  check_scope(params, atoms);
  const auto ops = build(params, atoms);
  Unraveling u{ops.basis, ops.h_eff + cdouble(0.0, 1.0) * ops.drive, {}};
  u.jumps.push_back(std::sqrt(2.0 * params.kappa) * ops.a);
  for (const auto& s : ops.sm) u.jumps.push_back(std::sqrt(params.gamma) * s);
  return u;
}

}  // namespace cqed::oracle
