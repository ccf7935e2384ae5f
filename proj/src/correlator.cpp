#include "cqed/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "cqed/error.hpp"
#include "cqed/parallel.hpp"
#include "cqed/units.hpp"

namespace cqed {

CorrelatorConfig CorrelatorConfig::from_config(const Config& cfg) {
  CorrelatorConfig c;
  c.bin_width_ns = cfg.get_double("corr.bin_width_ns", c.bin_width_ns);
  c.tau_max_us = cfg.get_double("corr.tau_max_us", c.tau_max_us);
  if (const auto m = cfg.get("corr.mode")) {
    if (*m == "auto") c.mode = CorrelatorMode::Auto;
    else if (*m == "cross") c.mode = CorrelatorMode::Cross;
    else throw InputError("corr.mode must be auto or cross, got '" + *m + "'");
  }
  c.fold = cfg.get_bool("corr.fold", c.fold);
  c.workers = static_cast<unsigned>(cfg.get_u64("workers", c.workers));
  return c;
}

std::uint64_t CorrelatorConfig::bin_ps() const { return static_cast<std::uint64_t>(std::llround(bin_width_ns * kPsPerNs)); }

std::size_t CorrelatorConfig::bins() const {
  const double n = tau_max_us * kPsPerUs / static_cast<double>(bin_ps());
  const double r = std::round(n);
  return static_cast<std::size_t>(std::abs(n - r) < 1e-6 ? r : std::ceil(n));
}

void CorrelatorConfig::validate() const {
  if (!(bin_width_ns > 0.0) || !std::isfinite(bin_width_ns)) throw InputError("bin width must be positive");
  const double ps = bin_width_ns * kPsPerNs;
  if (std::abs(ps - std::round(ps)) > 1e-6 || ps < 1.0) throw InputError("bin width must be a whole number of ps");
  if (!(tau_max_us * kPsPerUs >= 10.0 * std::round(ps)))
    throw InputError("tau_max must span at least 10 bins");
  if (!(tau_max_us * kPsPerUs < 1e18)) throw InputError("tau_max is too large");
}

namespace {

void check_sorted(const ClickStream& s, const char* name) {
  if (s.timestamps.empty()) throw InputError(std::string(name) + " stream is empty");
  for (std::size_t i = 1; i < s.timestamps.size(); ++i)
    if (s.timestamps[i] <= s.timestamps[i - 1])
      throw InputError(std::string(name) + " stream is not strictly increasing: first inversion at index " +
                       std::to_string(i) + " (" + std::to_string(s.timestamps[i - 1]) + " then " +
                       std::to_string(s.timestamps[i]) + " ps)");
}

std::span<const std::uint64_t> clip(const ClickStream& s, std::uint64_t window) {
  const auto end = std::lower_bound(s.timestamps.begin(), s.timestamps.end(), window);
  return {s.timestamps.data(), static_cast<std::size_t>(end - s.timestamps.begin())};
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

// Histogram of t2 - t1 over [lo_bin d, hi_bin d), chunked over s1.
std::vector<std::uint64_t> histogram(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, bool self,
                                     std::int64_t lo_bin, std::int64_t hi_bin, std::int64_t d, unsigned workers) {
  const std::size_t nb = static_cast<std::size_t>(hi_bin - lo_bin);
  const std::int64_t lo = lo_bin * d, hi = hi_bin * d;
  const std::size_t w = resolve_workers(workers, a.size());
  const std::size_t chunks = std::min<std::size_t>(std::max<std::size_t>(1, 4 * w), std::max<std::size_t>(1, a.size()));
  std::vector<std::uint64_t> total(nb, 0);
  std::mutex m;
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t begin = a.size() * c / chunks, end = a.size() * (c + 1) / chunks;
    if (begin == end) return;
    std::vector<std::uint64_t> h(nb, 0);
    // first index of b with b[j] - a[begin] >= lo
    auto first = [&](std::uint64_t t) {
      const std::int64_t target = static_cast<std::int64_t>(t) + lo;
      if (target <= 0) return std::size_t{0};
      return static_cast<std::size_t>(
          std::lower_bound(b.begin(), b.end(), static_cast<std::uint64_t>(target)) - b.begin());
    };
    std::size_t j0 = first(a[begin]);
    for (std::size_t i = begin; i < end; ++i) {
      const std::int64_t t1 = static_cast<std::int64_t>(a[i]);
      while (j0 < b.size() && static_cast<std::int64_t>(b[j0]) - t1 < lo) ++j0;
      for (std::size_t j = self ? std::max(j0, i + 1) : j0; j < b.size(); ++j) {
        const std::int64_t delta = static_cast<std::int64_t>(b[j]) - t1;
        if (delta >= hi) break;
        if (self && delta == 0) continue;
        ++h[static_cast<std::size_t>(floor_div(delta, d) - lo_bin)];
      }
    }
    std::lock_guard lock(m);
    for (std::size_t k = 0; k < nb; ++k) total[k] += h[k];
  });
  return total;
}

void fill(CorrelationTrace& tr, const std::vector<double>& pairs, double norm) {
  const auto n = static_cast<Eigen::Index>(pairs.size());
  tr.pairs.resize(n);
  tr.g2.resize(n);
  tr.stderr_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    tr.pairs[i] = pairs[static_cast<std::size_t>(i)];
    tr.g2[i] = tr.pairs[i] / norm;
    tr.stderr_[i] = std::sqrt(std::max(tr.pairs[i], 1.0)) / norm;
  }
}

}  // namespace

CorrelationTrace correlate(const ClickStream& s1, const std::optional<ClickStream>& s2, const CorrelatorConfig& cfg) {
  cfg.validate();
  const bool cross = cfg.mode == CorrelatorMode::Cross;
  if (cross && !s2) throw InputError("cross mode needs a second stream");
  check_sorted(s1, "first");
  if (cross) check_sorted(*s2, "second");
  const std::uint64_t window = cross ? std::min(s1.duration_ps, s2->duration_ps) : s1.duration_ps;
  if (window == 0) throw InputError("streams have no common acquisition window");

  const auto a = clip(s1, window);
  const auto b = cross ? clip(*s2, window) : a;
  if (a.empty() || b.empty()) throw InputError("a stream has no clicks inside the common window");
  const double t_us = static_cast<double>(window) / kPsPerUs;
  const double r1 = static_cast<double>(a.size()) / t_us, r2 = static_cast<double>(b.size()) / t_us;

  const auto d = static_cast<std::int64_t>(cfg.bin_ps());
  const auto n = static_cast<std::int64_t>(cfg.bins());
  const double width_us = static_cast<double>(d) / kPsPerUs;
  const double norm = r1 * r2 * t_us * width_us;

  CorrelationTrace tr;
  tr.bin_width_us = width_us;
  tr.metadata["mode"] = cross ? "cross" : "auto";
  tr.metadata["rate1_per_us"] = format_double(r1);
  tr.metadata["rate2_per_us"] = format_double(r2);
  tr.metadata["window_us"] = format_double(t_us);
  tr.metadata["bin_width_ns"] = format_double(static_cast<double>(d) / kPsPerNs);

  if (!cross) {
    const auto h = histogram(a, a, true, 0, n, d, cfg.workers);
    tr.tau = Eigen::VectorXd::LinSpaced(n, 0.5 * width_us, (static_cast<double>(n) - 0.5) * width_us);
    fill(tr, std::vector<double>(h.begin(), h.end()), norm);
    tr.metadata["pair_norm"] = format_double(norm);
    return tr;
  }

  const auto h = histogram(a, b, false, -n, n, d, cfg.workers);
  if (!cfg.fold) {
    tr.tau = Eigen::VectorXd::LinSpaced(2 * n, (-static_cast<double>(n) + 0.5) * width_us,
                                        (static_cast<double>(n) - 0.5) * width_us);
    fill(tr, std::vector<double>(h.begin(), h.end()), norm);
    tr.metadata["pair_norm"] = format_double(norm);
    tr.metadata["folded"] = "false";
    return tr;
  }
  // Bin k >= 0 covers [k d, (k+1) d); its mirror -k-1 covers [-(k+1) d, -k d).
  std::vector<double> folded(static_cast<std::size_t>(n));
  double chi2 = 0.0;
  std::size_t dof = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double pos = static_cast<double>(h[static_cast<std::size_t>(n + k)]);
    const double neg = static_cast<double>(h[static_cast<std::size_t>(n - k - 1)]);
    folded[static_cast<std::size_t>(k)] = pos + neg;
    if (pos + neg > 0.0) {
      chi2 += (pos - neg) * (pos - neg) / (pos + neg);
      ++dof;
    }
  }
  tr.metadata["symmetry_chi2"] = format_double(chi2);
  tr.metadata["symmetry_dof"] = std::to_string(dof);
  if (dof > 0 && (chi2 - static_cast<double>(dof)) / std::sqrt(2.0 * static_cast<double>(dof)) > 5.0)
    throw NumericalError("cross-correlation is not symmetric in tau: chi2 " + format_double(chi2) + " for " +
                         std::to_string(dof) + " bins; rerun without folding");
  tr.tau = Eigen::VectorXd::LinSpaced(n, 0.5 * width_us, (static_cast<double>(n) - 0.5) * width_us);
  fill(tr, folded, 2.0 * norm);
  tr.metadata["pair_norm"] = format_double(2.0 * norm);
  tr.metadata["folded"] = "true";
  return tr;
}

CorrelationTrace rebin(const CorrelationTrace& trace, std::size_t factor) {
  if (factor == 0) throw InputError("rebin factor must be positive");
  if (!trace.has_pairs()) throw InputError("rebin needs raw pair counts");
  const auto it = trace.metadata.find("pair_norm");
  if (it == trace.metadata.end()) throw InputError("trace carries no pair normalization");
  const double norm = std::stod(it->second);
  const auto n = static_cast<std::size_t>(trace.size());
  if (n % factor != 0)
    throw InputError("rebin factor " + std::to_string(factor) + " does not divide " + std::to_string(n) + " bins");
  CorrelationTrace out;
  out.metadata = trace.metadata;
  out.bin_width_us = trace.bin_width_us * static_cast<double>(factor);
  const std::size_t m = n / factor;
  out.tau.resize(static_cast<Eigen::Index>(m));
  std::vector<double> pairs(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double tau = 0.0;
    for (std::size_t k = 0; k < factor; ++k) {
      const auto src = static_cast<Eigen::Index>(i * factor + k);
      pairs[i] += trace.pairs[src];
      tau += trace.tau[src];
    }
    out.tau[static_cast<Eigen::Index>(i)] = tau / static_cast<double>(factor);
  }
  const double new_norm = norm * static_cast<double>(factor);
  fill(out, pairs, new_norm);
  out.metadata["pair_norm"] = format_double(new_norm);
  out.metadata["bin_width_ns"] = format_double(out.bin_width_us * kPsPerUs / kPsPerNs);
  return out;
}

}  // namespace cqed
