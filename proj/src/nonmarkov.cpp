#include "cqed/nonmarkov.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>

#include "cqed/error.hpp"
#include "cqed/parallel.hpp"
#include "cqed/units.hpp"

namespace cqed {

cdouble ExpSum::value(double t) const {
  cdouble s = 0.0;
  for (std::size_t j = 0; j < coeff.size(); ++j) s += coeff[j] * std::exp(rate[j] * t);
  return s;
}

cdouble ExpSum::derivative(double t) const {
  cdouble s = 0.0;
  for (std::size_t j = 0; j < coeff.size(); ++j) s += coeff[j] * rate[j] * std::exp(rate[j] * t);
  return s;
}

double ExpSum::slowest_decay() const {
  double r = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < rate.size(); ++j)
    if (coeff[j] != 0.0) r = std::max(r, rate[j].real());
  return r;
}

ExpSum kernel_expansion(const RateParams& params, std::span<const DetuningClass> classes) {
  OneExcitationState init = kernel_initial_state(params, classes);
  const auto merged = merge_equal_detunings(classes, {&init});
  const Eigen::MatrixXcd m = one_excitation_matrix(params, merged);
  Eigen::VectorXcd x0(m.rows());
  x0[0] = init.a1;
  x0.tail(m.rows() - 1) = init.b;

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("eigen-decomposition of the kernel matrix failed");
  const Eigen::MatrixXcd& v = es.eigenvectors();
  const Eigen::VectorXcd y = v.fullPivLu().solve(x0);
  // A (nearly) defective matrix shows up as a bad reconstruction of x0 or of x0'.
  const double err0 = (v * y - x0).norm() / x0.norm();
  const Eigen::VectorXcd dx = m * x0;
  const Eigen::VectorXcd dx_rec = v * es.eigenvalues().asDiagonal() * y;
  const double err1 = (dx_rec - dx).norm() / std::max(dx.norm(), 1e-300);
  if (!(err0 < 1e-9) || !(err1 < 1e-7))
    throw NumericalError("kernel matrix is too close to defective for an exponential expansion");

  ExpSum out;
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    const cdouble c = v(0, j) * y[j];
    if (c == 0.0) continue;
    out.coeff.push_back(c);
    out.rate.push_back(es.eigenvalues()[j]);
  }
  return out;
}

ReducedChannel::ReducedChannel(std::vector<ExpSum> kernels) : kernels_(std::move(kernels)) {
  if (kernels_.empty()) throw InputError("a channel needs at least one kernel");
  for (const auto& k : kernels_)
    if (!(k.slowest_decay() < 0.0)) throw NumericalError("kernel does not decay");
}

ReducedChannel ReducedChannel::single(const RateParams& params, std::span<const DetuningClass> classes) {
  return ReducedChannel({kernel_expansion(params, classes)});
}

ReducedChannel ReducedChannel::averaged(const RateParams& params, std::span<const AtomRealization> realizations,
                                        unsigned workers) {
  if (realizations.empty()) throw InputError("no realizations to average");
  std::vector<ExpSum> kernels(realizations.size());
  parallel_for(realizations.size(), workers, [&](std::size_t i) {
    const auto& r = realizations[i];
    auto classes = resolve_emitters(r);
    if (classes.empty()) classes.push_back({0.0, r.class_detunings.front(), 1.0});
    kernels[i] = kernel_expansion(apply_realization(params, r), classes);
  });
  return ReducedChannel(std::move(kernels));
}

ReducedChannel::Sample ReducedChannel::at(double t) const {
  cdouble g = 0.0, dg = 0.0;
  double p = 0.0, dp = 0.0;
  for (const auto& k : kernels_) {
    const cdouble v = k.value(t), d = k.derivative(t);
    g += v;
    dg += d;
    p += std::norm(v);
    dp += 2.0 * (std::conj(v) * d).real();
  }
  const double n = static_cast<double>(kernels_.size());
  return {g / n, dg / n, p / n, dp / n};
}

double ReducedChannel::horizon() const {
  double h = 0.0;
  for (const auto& k : kernels_) {
    double scale = 0.0;
    for (const auto& c : k.coeff) scale += std::abs(c);
    h = std::max(h, std::log(std::max(scale, 1.0) * 1e12) / -k.slowest_decay());
  }
  return h;
}

double ReducedChannel::fastest_rate() const {
  double r = 0.0;
  for (const auto& k : kernels_)
    for (const auto& l : k.rate) r = std::max(r, std::abs(l));
  return r;
}

namespace {

double distance_from(const ReducedChannel::Sample& s, double cz2, double cp2) {
  return std::sqrt(s.p * s.p * cz2 + std::norm(s.g) * cp2);
}

double rate_from(const ReducedChannel::Sample& s, double cz2, double cp2) {
  const double d = distance_from(s, cz2, cp2);
  if (d == 0.0) return 0.0;
  return (s.p * s.dp * cz2 + (std::conj(s.g) * s.dg).real() * cp2) / d;
}

struct Weights {
  double cz2, cp2;
  explicit Weights(const StatePair& pair) {
    if (!(pair.theta >= 0.0 && pair.theta <= kTwoPi / 4.0 + 1e-15)) throw InputError("pair angle must lie in [0, pi/2]");
    cz2 = std::cos(pair.theta) * std::cos(pair.theta);
    cp2 = std::sin(pair.theta) * std::sin(pair.theta);
  }
};

// Channel samples on a uniform grid, reused for every pair.
struct SampledChannel {
  std::vector<double> t;
  std::vector<ReducedChannel::Sample> s;

  SampledChannel(const ReducedChannel& ch, std::size_t intervals) {
    const double h = ch.horizon();
    t.resize(intervals + 1);
    s.resize(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i) {
      t[i] = h * static_cast<double>(i) / static_cast<double>(intervals);
      s[i] = ch.at(t[i]);
    }
  }
};

std::size_t base_intervals(const ReducedChannel& ch) {
  const double h = ch.horizon();
  const double dt = 0.05 / std::max(ch.fastest_rate(), 1e-12);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(h / dt)), 256, 1 << 16);
}

// Root of dD/dt bracketed by [a, b], by bisection to round-off.
double refine_root(const ReducedChannel& ch, const Weights& w, double a, double b) {
  double fa = rate_from(ch.at(a), w.cz2, w.cp2);
  for (int it = 0; it < 200 && b - a > 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, b); ++it) {
    const double m = 0.5 * (a + b);
    const double fm = rate_from(ch.at(m), w.cz2, w.cp2);
    if (fm == 0.0) return m;
    if ((fm > 0.0) == (fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

double increase_sum(const ReducedChannel& ch, const Weights& w, const SampledChannel& grid) {
  std::vector<double> nodes{grid.t.front()};
  double prev = rate_from(grid.s[0], w.cz2, w.cp2);
  for (std::size_t i = 1; i < grid.t.size(); ++i) {
    const double cur = rate_from(grid.s[i], w.cz2, w.cp2);
    if ((prev > 0.0 && cur < 0.0) || (prev < 0.0 && cur > 0.0)) nodes.push_back(refine_root(ch, w, grid.t[i - 1], grid.t[i]));
    if (cur != 0.0) prev = cur;
  }
  nodes.push_back(grid.t.back());
  double sum = 0.0;
  double d_prev = distance_from(ch.at(nodes.front()), w.cz2, w.cp2);
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const double d = distance_from(ch.at(nodes[i]), w.cz2, w.cp2);
    sum += std::max(0.0, d - d_prev);
    d_prev = d;
  }
  return sum;
}

// Extrema sum with grid doubling until two successive grids agree.
double converged_increase_sum(const ReducedChannel& ch, const Weights& w, std::vector<SampledChannel>& grids) {
  const std::size_t base = base_intervals(ch);
  constexpr int kMaxLevels = 6;
  auto level = [&](int k) -> const SampledChannel& {
    while (static_cast<int>(grids.size()) <= k) grids.emplace_back(ch, base << grids.size());
    return grids[static_cast<std::size_t>(k)];
  };
  double last = increase_sum(ch, w, level(0));
  for (int k = 1; k < kMaxLevels; ++k) {
    const double next = increase_sum(ch, w, level(k));
    if (std::abs(next - last) <= 1e-12 * std::max(1.0, next)) return next;
    last = next;
  }
  throw NumericalError("trace-distance extrema still unresolved after " + std::to_string(kMaxLevels) +
                       " grid refinements");
}

// Adaptive 7-15 Gauss-Kronrod for an integrand clamped at zero. The nodes miss
// the interval ends, so a jump of the clamp just inside an end looks smooth to
// both rules; an interval whose samples (ends included) are partly zero and
// partly positive is therefore always split.
double gauss_kronrod(const std::function<double(double)>& f, double a, double b, double fa, double fb, double tol,
                     int depth) {
  static const double xk[8] = {0.991455371120812639, 0.949107912342758525, 0.864864423359769073,
                               0.741531185599394440, 0.586087235467691130, 0.405845151377397167,
                               0.207784955007898468, 0.0};
  static const double wk[8] = {0.022935322010529225, 0.063092092629978553, 0.104790010322250184,
                               0.140653259715525919, 0.169004726639267903, 0.190350578064785410,
                               0.204432940075298892, 0.209482141084727828};
  static const double wg[4] = {0.129484966168869693, 0.279705391489276668, 0.381830050505118945,
                               0.417959183673469388};
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double k = wk[7] * fc, g = wg[3] * fc;
  int zeros = (fa == 0.0) + (fb == 0.0) + (fc == 0.0);
  for (int i = 0; i < 7; ++i) {
    const double f1 = f(c - h * xk[i]), f2 = f(c + h * xk[i]);
    zeros += (f1 == 0.0) + (f2 == 0.0);
    k += wk[i] * (f1 + f2);
    if (i % 2 == 1) g += wg[i / 2] * (f1 + f2);
  }
  k *= h;
  g *= h;
  const bool mixed = zeros > 0 && zeros < 17;
  if (depth <= 0 || (!mixed && std::abs(k - g) <= tol)) return k;
  return gauss_kronrod(f, a, c, fa, fc, 0.5 * tol, depth - 1) + gauss_kronrod(f, c, b, fc, fb, 0.5 * tol, depth - 1);
}

}  // namespace

double trace_distance(const ReducedChannel& ch, const StatePair& pair, double t) {
  const Weights w(pair);
  return distance_from(ch.at(t), w.cz2, w.cp2);
}

double trace_distance_rate(const ReducedChannel& ch, const StatePair& pair, double t) {
  const Weights w(pair);
  return rate_from(ch.at(t), w.cz2, w.cp2);
}

std::vector<double> trace_distance_curve(const ReducedChannel& ch, const StatePair& pair, std::span<const double> t) {
  const Weights w(pair);
  std::vector<double> out;
  out.reserve(t.size());
  for (double x : t) out.push_back(distance_from(ch.at(x), w.cz2, w.cp2));
  return out;
}

double blp_increase_sum(const ReducedChannel& ch, const StatePair& pair) {
  std::vector<SampledChannel> grids;
  return converged_increase_sum(ch, Weights(pair), grids);
}

double blp_positive_rate_integral(const ReducedChannel& ch, const StatePair& pair) {
  const Weights w(pair);
  const auto f = [&](double t) { return std::max(0.0, rate_from(ch.at(t), w.cz2, w.cp2)); };
  const std::size_t n = base_intervals(ch);
  const double h = ch.horizon();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = h * static_cast<double>(i) / static_cast<double>(n);
    const double b = h * static_cast<double>(i + 1) / static_cast<double>(n);
    sum += gauss_kronrod(f, a, b, f(a), f(b), 1e-10 / static_cast<double>(n), 48);
  }
  return sum;
}

BlpResult blp_measure(const ReducedChannel& ch) {
  std::vector<SampledChannel> grids;
  auto measure = [&](double theta) { return converged_increase_sum(ch, Weights(StatePair{theta, 0.0}), grids); };
  const double quarter = kTwoPi / 4.0;
  constexpr int kGrid = 64;
  std::vector<double> values(kGrid);
  int best = 0;
  for (int i = 0; i < kGrid; ++i) {
    values[i] = measure(quarter * i / (kGrid - 1));
    if (values[i] > values[best]) best = i;
  }
  BlpResult out;
  out.population_pair = values.front();
  out.coherence_pair = values.back();
  out.theta = quarter * best / (kGrid - 1);
  out.measure = values[best];

  if (values[best] > 0.0) {
    // golden-section refinement between the neighbours of the best grid angle
    double lo = quarter * std::max(best - 1, 0) / (kGrid - 1);
    double hi = quarter * std::min(best + 1, kGrid - 1) / (kGrid - 1);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = measure(x1), f2 = measure(x2);
    for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
      if (f1 < f2) {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + phi * (hi - lo);
        f2 = measure(x2);
      } else {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - phi * (hi - lo);
        f1 = measure(x1);
      }
    }
    const double x = f1 > f2 ? x1 : x2;
    const double fx = std::max(f1, f2);
    if (fx > out.measure) {
      out.measure = fx;
      out.theta = x;
    }
  }

  out.quadrature = blp_positive_rate_integral(ch, StatePair{out.theta, 0.0});
  if (!(std::abs(out.quadrature - out.measure) < 1e-6))
    throw NumericalError("extrema sum " + format_double(out.measure) + " and quadrature " +
                         format_double(out.quadrature) + " of the BLP measure disagree");
  return out;
}

std::vector<BlpCurvePoint> blp_vs_coupling(const ModeGeometry& geom, const BeamConfig& beam, const RateParams& params,
                                           std::span<const double> n_eff_grid) {
  params.validate();
  for (double n : n_eff_grid)
    if (!(n >= 0.0)) throw InputError("N_eff must be non-negative");
  std::vector<BlpCurvePoint> out(n_eff_grid.size());
  // Parallel over grid points; each point is serial inside.
  parallel_for(n_eff_grid.size(), beam.workers, [&](std::size_t k) {
    const double n = n_eff_grid[k];
    BlpCurvePoint& pt = out[k];
    pt.n_eff = n;
    pt.omega_vr_mhz = rad_per_us_to_mhz(rabi_oscillation_frequency(params, n));
    if (n == 0.0) {
      const std::vector<DetuningClass> empty{{0.0, params.delta_a, 1.0}};
      pt.max_coupled = blp_measure(ReducedChannel::single(params, empty));
      pt.averaged = pt.max_coupled;
      return;
    }
    const std::vector<DetuningClass> max{DetuningClass::identical(params.g_max, n, params.delta_a)};
    pt.max_coupled = blp_measure(ReducedChannel::single(params, max));
    BeamConfig cfg = beam;
    cfg.target_n_eff = n;
    cfg.seed = mix_seed(beam.seed, 0xb1b0000ULL + k);
    cfg.workers = 1;
    const auto ens = sample_ensemble(geom, cfg, params);
    pt.averaged = blp_measure(ReducedChannel::averaged(params, ens, 1));
  });
  return out;
}

}  // namespace cqed
