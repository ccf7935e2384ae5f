#include "cqed/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "cqed/error.hpp"
#include "cqed/parallel.hpp"
#include "cqed/units.hpp"

namespace cqed {

namespace {

struct Estimates {
  double c, a0, w;
  Eigen::Index extremum;
};

// Initial guesses read off the trace (tau >= 0 part only).
Estimates estimate(const Eigen::VectorXd& tau, const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  const Eigen::Index tail = std::max<Eigen::Index>(1, (n + 9) / 10);
  const double c = y.tail(tail).mean();
  Eigen::Index ext = 0;
  (y.array() - c).abs().maxCoeff(&ext);
  const double a0 = c - y[ext];
  const double half = c - 0.5 * a0;
  double w = tau[n - 1] > 0.0 ? 0.5 * tau[n - 1] : 1.0;
  for (Eigen::Index i = ext; i + 1 < n; ++i) {
    const double d0 = (y[i] - half) * (a0 > 0 ? 1 : -1), d1 = (y[i + 1] - half) * (a0 > 0 ? 1 : -1);
    if (d0 <= 0.0 && d1 >= 0.0) {
      const double f = d1 == d0 ? 0.0 : -d0 / (d1 - d0);
      w = tau[i] + f * (tau[i + 1] - tau[i]);
      break;
    }
  }
  if (!(w > 0.0)) w = tau[std::min<Eigen::Index>(1, n - 1)] > 0 ? tau[std::min<Eigen::Index>(1, n - 1)] : 1.0;
  return {c, a0, std::abs(w), ext};
}

struct Selected {
  Eigen::VectorXd tau, y, sigma;
  bool weighted = false;
};

Selected select_nonnegative(const CorrelationTrace& trace, double window_end) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < trace.tau.size(); ++i)
    if (trace.tau[i] >= 0.0 && trace.tau[i] <= window_end) keep.push_back(i);
  Selected s;
  const auto n = static_cast<Eigen::Index>(keep.size());
  s.tau.resize(n);
  s.y.resize(n);
  s.sigma = Eigen::VectorXd::Ones(n);
  s.weighted = trace.has_errors();
  for (Eigen::Index k = 0; k < n; ++k) {
    s.tau[k] = trace.tau[keep[k]];
    s.y[k] = trace.g2[keep[k]];
    if (s.weighted) {
      s.sigma[k] = trace.stderr_[keep[k]];
      if (!(s.sigma[k] > 0.0) || !std::isfinite(s.sigma[k])) s.weighted = false;
    }
  }
  if (!s.weighted) s.sigma.setOnes();
  return s;
}

void check_trace(const CorrelationTrace& trace) {
  if (trace.tau.size() != trace.g2.size()) throw InputError("trace columns differ in length");
  if (!trace.g2.allFinite() || !trace.tau.allFinite()) throw InputError("trace contains non-finite values");
}

}  // namespace

double default_fit_window(const CorrelationTrace& trace) {
  check_trace(trace);
  const auto all = select_nonnegative(trace, std::numeric_limits<double>::infinity());
  if (all.tau.size() < 2) throw InputError("trace has fewer than two non-negative delays");
  const auto e = estimate(all.tau, all.y);
  const double level = 0.1 * std::abs(e.a0);
  for (Eigen::Index i = e.extremum; i < all.y.size(); ++i)
    if (std::abs(all.y[i] - e.c) <= level) return 1.5 * all.tau[i];
  return all.tau[all.tau.size() - 1];
}

LorentzFit fit_inverted_lorentzian(const CorrelationTrace& trace, const FitOptions& opts) {
  check_trace(trace);
  const double window = opts.window_end ? *opts.window_end : default_fit_window(trace);
  if (!(window > 0.0)) throw InputError("fit window must be positive");
  const auto d = select_nonnegative(trace, window);
  const Eigen::Index n = d.y.size();
  if (n < 10) throw InputError("fit window holds " + std::to_string(n) + " points; at least 10 are required");

  const auto all = select_nonnegative(trace, std::numeric_limits<double>::infinity());
  const auto e = estimate(all.tau, all.y);
  Eigen::Vector3d p(e.c, e.a0, e.w);
  const Eigen::VectorXd inv_sigma = d.sigma.cwiseInverse();

  auto residuals = [&](const Eigen::Vector3d& q) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = d.tau[i] / q[2];
      r[i] = (d.y[i] - (q[0] - q[1] / (1.0 + x * x))) * inv_sigma[i];
    }
    return r;
  };
  // Jacobian of the model (not the residual), weighted.
  auto jacobian = [&](const Eigen::Vector3d& q) {
    Eigen::MatrixXd j(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = d.tau[i] / q[2];
      const double den = 1.0 + x * x;
      j(i, 0) = 1.0;
      j(i, 1) = -1.0 / den;
      j(i, 2) = -q[1] * 2.0 * x * x / (q[2] * den * den);
      j.row(i) *= inv_sigma[i];
    }
    return j;
  };

  LorentzFit fit;
  Eigen::VectorXd r = residuals(p);
  double chi2 = r.squaredNorm();
  fit.objective.push_back(chi2);
  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  for (; it < opts.max_iterations && !converged; ++it) {
    const Eigen::MatrixXd j = jacobian(p);
    const Eigen::Matrix3d jtj = j.transpose() * j;
    const Eigen::Vector3d g = j.transpose() * r;
    for (;;) {
      Eigen::Matrix3d a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
      const Eigen::Vector3d step = a.ldlt().solve(g);
      Eigen::Vector3d trial = p + step;
      trial[2] = std::abs(trial[2]);
      const Eigen::VectorXd rt = residuals(trial);
      const double chi2t = rt.squaredNorm();
      if (std::isfinite(chi2t) && chi2t <= chi2) {
        const double change = (step.array().abs() / (p.array().abs() + 1e-300)).maxCoeff();
        p = trial;
        r = rt;
        if (chi2t < chi2) fit.objective.push_back(chi2t);
        chi2 = chi2t;
        lambda = std::max(lambda / 10.0, 1e-15);
        converged = change < opts.rel_tol;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e20) {
        // No downhill step at any damping: the gradient vanishes to round-off.
        converged = true;
        break;
      }
    }
  }
  if (!converged)
    throw NumericalError("inverted-Lorentzian fit did not converge after " + std::to_string(it) +
                         " iterations (c=" + format_double(p[0]) + ", a0=" + format_double(p[1]) +
                         ", w=" + format_double(p[2]) + ")");

  fit.c = p[0];
  fit.a0 = p[1];
  fit.w = p[2];
  fit.iterations = it;
  fit.points = static_cast<std::size_t>(n);
  fit.window_end = window;
  fit.residual_norm = std::sqrt(chi2);
  fit.chi2_reduced = n > 3 ? chi2 / static_cast<double>(n - 3) : 0.0;
  const Eigen::MatrixXd j = jacobian(p);
  Eigen::Matrix3d cov = (j.transpose() * j).inverse();
  if (!d.weighted) cov *= fit.chi2_reduced;
  fit.covariance = cov;
  fit.speed = fit.a0 / fit.w;
  const Eigen::Vector3d grad(0.0, 1.0 / fit.w, -fit.a0 / (fit.w * fit.w));
  fit.speed_err = std::sqrt(std::max(0.0, grad.dot(cov * grad)));
  fit.bunched = fit.a0 <= 0.0;
  return fit;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y, std::span<const double> y_err) {
  if (x.size() != y.size() || x.size() != y_err.size()) throw InputError("linear fit inputs differ in length");
  if (x.size() < 3) throw InputError("linear fit needs at least three points");
  double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y_err[i] > 0.0)) throw InputError("linear fit errors must be positive");
    const double w = 1.0 / (y_err[i] * y_err[i]);
    s += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = s * sxx - sx * sx;
  if (!(det > 1e-12 * s * sxx)) throw InputError("linear fit abscissae are degenerate");
  LinearFit f;
  f.slope = (s * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  f.slope_err = std::sqrt(s / det);
  f.intercept_err = std::sqrt(sxx / det);
  double chi2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = (y[i] - f.intercept - f.slope * x[i]) / y_err[i];
    chi2 += r * r;
  }
  f.chi2_reduced = chi2 / static_cast<double>(x.size() - 2);
  return f;
}

SweepResult speed_sweep(std::span<const double> targets_mhz, const ModeGeometry& geom, const BeamConfig& beam,
                        const RateParams& params, const SweepOptions& opts) {
  if (targets_mhz.size() < 3) throw InputError("a sweep needs at least three targets");
  std::vector<double> tau = opts.tau_grid;
  if (tau.empty())
    for (int i = 0; i <= 300; ++i) tau.push_back(0.005 * i);

  SweepResult out;
  for (std::size_t k = 0; k < targets_mhz.size(); ++k) {
    SweepPoint pt;
    pt.omega_vr_mhz = targets_mhz[k];
    pt.n_eff = atom_number_for_rabi_frequency(params, mhz_to_rad_per_us(targets_mhz[k]));
    BeamConfig cfg = beam;
    cfg.target_n_eff = pt.n_eff;
    cfg.seed = mix_seed(beam.seed, 0x5eeb0000ULL + k);
    const auto ens = sample_ensemble(geom, cfg, params);
    const auto curves = realization_g2(ens, params, tau, cfg.workers);
    pt.fit = fit_inverted_lorentzian(average_curves(curves, tau, cfg.contrast));
    pt.speed = pt.fit.speed;

    double scatter = 0.0;
    const std::size_t b = opts.batches;
    if (b >= 2 && curves.size() >= 2 * b) {
      std::vector<double> speeds;
      const std::size_t per = curves.size() / b;
      for (std::size_t i = 0; i < b; ++i) {
        const std::span<const Eigen::VectorXd> part(curves.data() + i * per, per);
        FitOptions fo;
        fo.window_end = pt.fit.window_end;
        // A small batch can be too noisy for the Lorentzian; it then drops out of the scatter.
        try {
          speeds.push_back(fit_inverted_lorentzian(average_curves(part, tau, cfg.contrast), fo).speed);
        } catch (const NumericalError&) {
        }
      }
      const double nb = static_cast<double>(speeds.size());
      if (speeds.size() >= 2) {
        double m = 0.0;
        for (double v : speeds) m += v;
        m /= nb;
        double var = 0.0;
        for (double v : speeds) var += (v - m) * (v - m);
        scatter = std::sqrt(var / (nb - 1.0) / nb);
      }
    }
    pt.speed_err = std::hypot(pt.fit.speed_err, scatter);
    out.points.push_back(std::move(pt));
  }

  std::vector<double> x, y, e;
  for (const auto& pt : out.points) {
    x.push_back(pt.omega_vr_mhz);
    y.push_back(pt.speed);
    e.push_back(pt.speed_err);
  }
  out.regression = linear_fit(x, y, e);
  return out;
}

}  // namespace cqed
