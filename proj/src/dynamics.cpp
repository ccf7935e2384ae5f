#include "cqed/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "cqed/error.hpp"

namespace cqed {
namespace {

const double kSqrt2 = std::numbers::sqrt2;

// sigma_k^2 = 2 (1 - 1/N_k): squared coupling factor between |1, k> and the
// doubly excited symmetric state of class k, relative to G_k.
double saturation_factor_sq(const DetuningClass& c) {
  if (std::isinf(c.atom_count)) return 2.0;
  if (!(c.atom_count > 0.0)) return 0.0;
  return 2.0 * (1.0 - 1.0 / c.atom_count);
}

void check_classes(std::span<const DetuningClass> classes) {
  for (const auto& c : classes) {
    if (!(c.coupling >= 0.0) || !std::isfinite(c.coupling)) throw InputError("class coupling must be finite and >= 0");
    if (!std::isfinite(c.detuning)) throw InputError("class detuning must be finite");
    if (!(c.atom_count > 0.0)) throw InputError("class atom count must be positive");
  }
}

OneExcitationState unpack(const Eigen::VectorXcd& x) {
  return {x[0], x.tail(x.size() - 1)};
}

Eigen::VectorXcd pack(const OneExcitationState& s) {
  Eigen::VectorXcd x(s.b.size() + 1);
  x[0] = s.a1;
  x.tail(s.b.size()) = s.b;
  return x;
}

std::vector<OneExcitationState> propagate(const Eigen::MatrixXcd& m, const Eigen::VectorXcd& f,
                                          const Eigen::VectorXcd& x0, std::span<const double> t_grid,
                                          const IntegratorOptions& opts) {
  auto rhs = [&](double, const Eigen::VectorXcd& x) -> Eigen::VectorXcd { return m * x + f; };
  const auto xs = integrate_dopri(rhs, x0, t_grid, opts);
  std::vector<OneExcitationState> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(unpack(x));
  return out;
}

// Second-order steady state without the weak-drive guard (used with a unit
// drive when only ratios matter).
SecondOrderSteadyState solve_second_order(const RateParams& p, std::span<const DetuningClass> classes) {
  const auto k_count = static_cast<Eigen::Index>(classes.size());
  SecondOrderSteadyState out;
  out.first = steady_one_excitation(p, classes);
  const cdouble i(0.0, 1.0);
  const cdouble a1 = out.first.a1;
  const Eigen::VectorXcd& b = out.first.b;

  // pair decay denominators gamma + i(Delta_k + Delta_l)
  Eigen::MatrixXcd pair_den(k_count, k_count);
  for (Eigen::Index k = 0; k < k_count; ++k)
    for (Eigen::Index l = 0; l < k_count; ++l)
      pair_den(k, l) = p.gamma + i * (classes[k].detuning + classes[l].detuning);

  // Unknowns (a20, c_1..c_K) after eliminating the pair amplitudes
  //   b_kl = -(G_k c_l + G_l c_k) / den_kl,   b_kk~ = -G_k c_k / den_kk.
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(k_count + 1, k_count + 1);
  Eigen::VectorXcd rhs(k_count + 1);
  a(0, 0) = -2.0 * (p.kappa + i * p.delta_c);
  rhs[0] = -kSqrt2 * p.eps * a1;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double gk = classes[k].coupling;
    a(0, k + 1) = kSqrt2 * gk;
    a(k + 1, 0) = -kSqrt2 * gk;
    cdouble diag = -(p.kappa + p.gamma / 2.0 + i * (p.delta_c + classes[k].detuning));
    diag -= gk * gk * saturation_factor_sq(classes[k]) / pair_den(k, k);
    for (Eigen::Index l = 0; l < k_count; ++l) {
      if (l == k) continue;
      const double gl = classes[l].coupling;
      diag -= gl * gl / pair_den(k, l);
      a(k + 1, l + 1) -= gl * gk / pair_den(k, l);
    }
    a(k + 1, k + 1) = diag;
    rhs[k + 1] = -p.eps * b[k];
  }
  const Eigen::VectorXcd y = a.partialPivLu().solve(rhs);
  if (!y.allFinite()) throw NumericalError("singular second-order steady-state system");

  out.second.a20 = y[0];
  out.second.a1b = y.tail(k_count);
  out.second.bb = Eigen::VectorXcd::Zero(k_count * (k_count + 1) / 2);
  const Eigen::VectorXcd& c = out.second.a1b;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double gk = classes[k].coupling;
    const cdouble sigma = std::sqrt(cdouble(saturation_factor_sq(classes[k]), 0.0));
    out.second.bb[TwoExcitationState::pair_index(k, k, k_count)] = -gk * sigma * c[k] / pair_den(k, k);
    for (Eigen::Index l = k + 1; l < k_count; ++l) {
      const double gl = classes[l].coupling;
      out.second.bb[TwoExcitationState::pair_index(k, l, k_count)] = -(gk * c[l] + gl * c[k]) / pair_den(k, l);
    }
  }

  // Residual of the full (uneliminated) system, relative to its source terms.
  double res = 0.0;
  double scale = std::abs(kSqrt2 * p.eps * a1);
  cdouble r0 = kSqrt2 * p.eps * a1 - 2.0 * (p.kappa + i * p.delta_c) * out.second.a20;
  for (Eigen::Index k = 0; k < k_count; ++k) r0 += kSqrt2 * classes[k].coupling * c[k];
  res = std::max(res, std::abs(r0));
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double gk = classes[k].coupling;
    const cdouble sigma = std::sqrt(cdouble(saturation_factor_sq(classes[k]), 0.0));
    cdouble rk = p.eps * b[k] - kSqrt2 * gk * out.second.a20 -
                 (p.kappa + p.gamma / 2.0 + i * (p.delta_c + classes[k].detuning)) * c[k] +
                 gk * sigma * out.second.bb[TwoExcitationState::pair_index(k, k, k_count)];
    for (Eigen::Index l = 0; l < k_count; ++l)
      if (l != k) rk += classes[l].coupling * out.second.bb[TwoExcitationState::pair_index(k, l, k_count)];
    res = std::max(res, std::abs(rk));
    scale = std::max(scale, std::abs(p.eps * b[k]));
    for (Eigen::Index l = k; l < k_count; ++l) {
      const cdouble src = l == k ? gk * sigma * c[k] : gk * c[l] + classes[l].coupling * c[k];
      const cdouble rkl = src + pair_den(k, l) * out.second.bb[TwoExcitationState::pair_index(k, l, k_count)];
      res = std::max(res, std::abs(rkl));
    }
  }
  out.residual = scale > 0.0 ? res / scale : res;
  return out;
}

}  // namespace

std::vector<DetuningClass> reduce_to_classes(const AtomRealization& realization) {
  std::map<int, std::pair<double, double>> sums;  // label -> (sum g^2, sum g^4)
  for (const auto& a : realization.atoms) {
    auto& s = sums[a.label];
    const double g2 = a.coupling * a.coupling;
    s.first += g2;
    s.second += g2 * g2;
  }
  std::vector<DetuningClass> out;
  if (sums.empty()) {
    const double det = realization.class_detunings.empty() ? 0.0 : realization.class_detunings.front();
    out.push_back({0.0, det, 1.0});
    return out;
  }
  for (const auto& [label, s] : sums) {
    if (label < 0 || static_cast<std::size_t>(label) >= realization.class_detunings.size())
      throw InputError("atom class label without a detuning");
    const double n = s.second > 0.0 ? s.first * s.first / s.second : 1.0;
    out.push_back({std::sqrt(s.first), realization.class_detunings[label], n});
  }
  return out;
}

std::vector<DetuningClass> resolve_emitters(const AtomRealization& realization) {
  std::vector<DetuningClass> out;
  out.reserve(realization.atoms.size());
  for (const auto& a : realization.atoms) {
    if (a.label < 0 || static_cast<std::size_t>(a.label) >= realization.class_detunings.size())
      throw InputError("atom class label without a detuning");
    out.push_back({a.coupling, realization.class_detunings[a.label], 1.0});
  }
  return out;
}

RateParams apply_realization(const RateParams& params, const AtomRealization& realization) {
  RateParams p = params;
  p.delta_c += realization.cavity_detuning;
  return p;
}

Eigen::MatrixXcd one_excitation_matrix(const RateParams& params, std::span<const DetuningClass> classes) {
  const auto k_count = static_cast<Eigen::Index>(classes.size());
  const cdouble i(0.0, 1.0);
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(k_count + 1, k_count + 1);
  m(0, 0) = -(params.kappa + i * params.delta_c);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    m(0, k + 1) = classes[k].coupling;
    m(k + 1, 0) = -classes[k].coupling;
    m(k + 1, k + 1) = -(params.gamma / 2.0 + i * classes[k].detuning);
  }
  return m;
}

std::vector<OneExcitationState> integrate_driven(const RateParams& params, std::span<const DetuningClass> classes,
                                                 std::span<const double> t_grid, const IntegratorOptions& opts) {
  params.validate();
  check_classes(classes);
  const Eigen::MatrixXcd m = one_excitation_matrix(params, classes);
  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(m.rows());
  f[0] = params.eps;
  IntegratorOptions o = opts;
  o.abs_tol = std::max(opts.abs_tol * params.eps / params.kappa, 1e-300);
  return propagate(m, f, Eigen::VectorXcd::Zero(m.rows()), t_grid, o);
}

std::vector<OneExcitationState> propagate_homogeneous(const RateParams& params,
                                                      std::span<const DetuningClass> classes,
                                                      const OneExcitationState& initial,
                                                      std::span<const double> t_grid,
                                                      const IntegratorOptions& opts) {
  params.validate();
  check_classes(classes);
  if (initial.b.size() != static_cast<Eigen::Index>(classes.size()))
    throw InputError("initial state does not match the number of classes");
  const Eigen::MatrixXcd m = one_excitation_matrix(params, classes);
  return propagate(m, Eigen::VectorXcd::Zero(m.rows()), pack(initial), t_grid, opts);
}

OneExcitationState steady_one_excitation(const RateParams& params, std::span<const DetuningClass> classes) {
  params.validate();
  check_classes(classes);
  const Eigen::MatrixXcd m = one_excitation_matrix(params, classes);
  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(m.rows());
  f[0] = -params.eps;
  const Eigen::VectorXcd x = m.partialPivLu().solve(f);
  if (!x.allFinite()) throw NumericalError("singular one-excitation steady-state system");
  return unpack(x);
}

SecondOrderSteadyState steady_two_excitation(const RateParams& params, std::span<const DetuningClass> classes) {
  params.require_weak_drive();
  check_classes(classes);
  auto out = solve_second_order(params, classes);
  if (out.residual > 1e-10)
    throw NumericalError("second-order steady state ill-conditioned (relative residual " +
                         std::to_string(out.residual) + "); degenerate detuning classes?");
  return out;
}

OneExcitationState conditioned_state(const SecondOrderSteadyState& steady) {
  const cdouble a10 = steady.first.a1;
  if (std::abs(a10) < 1e-15) throw NumericalError("undefined correlation: steady field amplitude vanishes");
  return {kSqrt2 * steady.second.a20 / a10, steady.second.a1b / a10};
}

std::vector<DetuningClass> merge_equal_detunings(std::span<const DetuningClass> classes,
                                                 std::vector<OneExcitationState*> states) {
  std::vector<DetuningClass> merged;
  std::vector<Eigen::Index> target(classes.size());
  std::vector<double> sum_g2, sum_g4;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    Eigen::Index idx = -1;
    for (std::size_t m = 0; m < merged.size(); ++m)
      if (merged[m].detuning == classes[k].detuning) idx = static_cast<Eigen::Index>(m);
    if (idx < 0) {
      idx = static_cast<Eigen::Index>(merged.size());
      merged.push_back({0.0, classes[k].detuning, 1.0});
      sum_g2.push_back(0.0);
      sum_g4.push_back(0.0);
    }
    target[k] = idx;
    const double g2 = classes[k].coupling * classes[k].coupling;
    sum_g2[idx] += g2;
    sum_g4[idx] += std::isinf(classes[k].atom_count) ? 0.0 : g2 * g2 / classes[k].atom_count;
  }
  for (std::size_t m = 0; m < merged.size(); ++m) {
    merged[m].coupling = std::sqrt(sum_g2[m]);
    merged[m].atom_count = sum_g4[m] > 0.0 ? sum_g2[m] * sum_g2[m] / sum_g4[m]
                                           : std::numeric_limits<double>::infinity();
    if (sum_g2[m] == 0.0) merged[m].atom_count = 1.0;
  }
  for (OneExcitationState* s : states) {
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(merged.size()));
    for (std::size_t k = 0; k < classes.size(); ++k)
      if (merged[target[k]].coupling > 0.0) b[target[k]] += classes[k].coupling * s->b[k] / merged[target[k]].coupling;
    s->b = std::move(b);
  }
  return merged;
}

OneExcitationState kernel_initial_state(const RateParams& params, std::span<const DetuningClass> classes) {
  params.validate();
  check_classes(classes);
  const auto k_count = static_cast<Eigen::Index>(classes.size());
  OneExcitationState init{1.0, Eigen::VectorXcd::Zero(k_count)};
  const bool coupled = std::any_of(classes.begin(), classes.end(), [](const auto& c) { return c.coupling > 0.0; });
  if (!coupled) return init;

  RateParams unit = params;
  unit.eps = 1.0;
  const auto steady = solve_second_order(unit, classes);
  const auto cond = conditioned_state(steady);
  const cdouble da = cond.a1 - steady.first.a1;
  if (std::abs(da) < 1e-300) return init;
  init.b = (cond.b - steady.first.b) / da;
  return init;
}

std::vector<cdouble> response_kernel(const RateParams& params, std::span<const DetuningClass> classes,
                                     std::span<const double> t_grid, const IntegratorOptions& opts) {
  OneExcitationState init = kernel_initial_state(params, classes);
  const auto merged = merge_equal_detunings(classes, {&init});
  const auto states = propagate_homogeneous(params, merged, init, t_grid, opts);
  std::vector<cdouble> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s.a1);
  return out;
}

CorrelationTrace g2_regression(const RateParams& params, std::span<const DetuningClass> classes,
                               std::span<const double> tau_grid) {
  params.require_weak_drive();
  check_classes(classes);
  auto steady = solve_second_order(params, classes);
  if (std::abs(steady.first.a1) < 1e-15) throw NumericalError("undefined correlation: steady field amplitude vanishes");
  OneExcitationState start = conditioned_state(steady);
  OneExcitationState ss = steady.first;
  const auto merged = merge_equal_detunings(classes, {&start, &ss});

  const Eigen::MatrixXcd m = one_excitation_matrix(params, merged);
  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(m.rows());
  f[0] = params.eps;
  IntegratorOptions opts;
  opts.rel_tol = 1e-12;
  opts.abs_tol = 1e-15 * std::abs(ss.a1);
  const auto states = propagate(m, f, pack(start), tau_grid, opts);

  CorrelationTrace trace;
  trace.tau = Eigen::Map<const Eigen::VectorXd>(tau_grid.data(), static_cast<Eigen::Index>(tau_grid.size()));
  trace.g2.resize(trace.tau.size());
  const double norm = std::norm(ss.a1);
  for (std::size_t n = 0; n < states.size(); ++n) trace.g2[static_cast<Eigen::Index>(n)] = std::norm(states[n].a1) / norm;
  trace.metadata["model"] = "regression";
  return trace;
}

namespace {

double transmitted(const RateParams& params, std::span<const DetuningClass> classes, double drive) {
  RateParams p = params;
  p.delta_c += drive;
  std::vector<DetuningClass> shifted(classes.begin(), classes.end());
  for (auto& c : shifted) c.detuning += drive;
  return std::norm(steady_one_excitation(p, shifted).a1);
}

// Golden-section maximization on [lo, hi].
double refine_peak(const RateParams& params, std::span<const DetuningClass> classes, double lo, double hi) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = transmitted(params, classes, x1), f2 = transmitted(params, classes, x2);
  for (int it = 0; it < 200 && hi - lo > 1e-10 * std::max(1.0, std::abs(lo)); ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = transmitted(params, classes, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = transmitted(params, classes, x1);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TransmissionSpectrum transmission_spectrum(const RateParams& params, std::span<const DetuningClass> classes,
                                           std::span<const double> drive_detuning_grid) {
  params.validate();
  check_classes(classes);
  TransmissionSpectrum out;
  const auto n = static_cast<Eigen::Index>(drive_detuning_grid.size());
  if (n < 3) throw InputError("spectrum grid needs at least three points");
  out.drive_detuning = Eigen::Map<const Eigen::VectorXd>(drive_detuning_grid.data(), n);
  out.intensity.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) out.intensity[k] = transmitted(params, classes, drive_detuning_grid[k]);

  std::vector<std::pair<double, double>> peaks;  // (height, position)
  for (Eigen::Index k = 1; k + 1 < n; ++k) {
    if (out.intensity[k] > out.intensity[k - 1] && out.intensity[k] >= out.intensity[k + 1]) {
      const double pos = refine_peak(params, classes, drive_detuning_grid[k - 1], drive_detuning_grid[k + 1]);
      peaks.emplace_back(transmitted(params, classes, pos), pos);
    }
  }
  std::sort(peaks.begin(), peaks.end(), std::greater<>());
  for (const auto& pk : peaks) out.peaks.push_back(pk.second);
  if (peaks.size() >= 2) {
    out.split = true;
    out.separation = std::abs(peaks[0].second - peaks[1].second);
  }
  std::sort(out.peaks.begin(), out.peaks.end());
  return out;
}

}  // namespace cqed
