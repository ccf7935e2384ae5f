#pragma once

// Shared fixtures for the test binaries.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "cqed/correlator.hpp"
#include "cqed/trajectories.hpp"

namespace cqed::testing {

/// Every qualifying pair by direct O(n^2) enumeration, binned like correlate
/// (signed bins for cross mode, index 0 = most negative).
inline std::vector<std::uint64_t> brute_force_pairs(const ClickStream& s1, const std::optional<ClickStream>& s2,
                                                    const CorrelatorConfig& cfg) {
  const bool cross = cfg.mode == CorrelatorMode::Cross;
  const auto d = static_cast<std::int64_t>(cfg.bin_ps());
  const auto n = static_cast<std::int64_t>(cfg.bins());
  const std::uint64_t window = cross ? std::min(s1.duration_ps, s2->duration_ps) : s1.duration_ps;
  const auto& b = cross ? s2->timestamps : s1.timestamps;
  std::vector<std::uint64_t> h(static_cast<std::size_t>(cross ? 2 * n : n), 0);
  for (std::size_t i = 0; i < s1.timestamps.size(); ++i) {
    if (s1.timestamps[i] >= window) continue;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (b[j] >= window) continue;
      if (!cross && j == i) continue;
      const std::int64_t delta = static_cast<std::int64_t>(b[j]) - static_cast<std::int64_t>(s1.timestamps[i]);
      const std::int64_t lo = cross ? -n * d : 1;
      if (delta < lo || delta >= n * d) continue;
      const auto bin = static_cast<std::int64_t>(std::floor(static_cast<double>(delta) / static_cast<double>(d)));
      ++h[static_cast<std::size_t>(cross ? bin + n : bin)];
    }
  }
  return h;
}

/// Homogeneous Poisson clicks at `rate` [1/us].
inline ClickStream poisson_stream(double rate, double duration_us, std::uint64_t seed, std::uint16_t detector = 0) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  ClickStream s;
  s.duration_ps = static_cast<std::uint64_t>(std::llround(duration_us * kPsPerUs));
  s.detector = detector;
  for (double t = gap(rng); t < duration_us; t += gap(rng)) {
    const auto ps = static_cast<std::uint64_t>(std::llround(t * kPsPerUs));
    if (ps >= s.duration_ps) break;
    if (s.timestamps.empty() || ps > s.timestamps.back()) s.timestamps.push_back(ps);
  }
  return s;
}

/// Upper tail of the chi-square distribution (Wilson-Hilferty; fine for dof >= 5).
inline double chi2_pvalue(double chi2, double dof) {
  const double a = 2.0 / (9.0 * dof);
  const double z = (std::cbrt(chi2 / dof) - (1.0 - a)) / std::sqrt(a);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace cqed::testing
