#pragma once

#include <cstdint>
#include <optional>

#include "cqed/config.hpp"
#include "cqed/trace.hpp"
#include "cqed/trajectories.hpp"

namespace cqed {

enum class CorrelatorMode { Auto, Cross };

struct CorrelatorConfig {
  double bin_width_ns = 10.0;
  double tau_max_us = 1.5;
  CorrelatorMode mode = CorrelatorMode::Cross;
  /// Cross mode only: report on |tau| (after the symmetry check) or keep signed delays.
  bool fold = true;
  unsigned workers = 0;  ///< 0: hardware concurrency

  /// Keys `corr.bin_width_ns`, `corr.tau_max_us`, `corr.mode` (auto|cross), `corr.fold`, `workers`.
  static CorrelatorConfig from_config(const Config& cfg);
  /// Throws InputError unless the bin width is a positive whole number of ps and
  /// tau_max >= 10 bin widths.
  void validate() const;
  std::uint64_t bin_ps() const;
  std::size_t bins() const;  ///< tau_max / bin width, rounded up
};

/// Coincidence histogram of delays t2 - t1 in bins [i d, (i+1) d), normalized by
/// r1 r2 T d with the measured rates over the common window T. Auto mode uses
/// s1 alone and only delays > 0. Errors are sqrt(max(pairs, 1)) normalized.
/// Folded cross traces carry metadata `symmetry_chi2` and `symmetry_dof`; a
/// folded trace whose two halves differ by more than 5 sigma of the chi-square
/// is rejected with NumericalError. The check treats pair counts as Poisson, so
/// strongly clustered input can fail it; fold = false skips it.
CorrelationTrace correlate(const ClickStream& s1, const std::optional<ClickStream>& s2, const CorrelatorConfig& cfg);

/// Merges `factor` adjacent bins; the pair normalization is read from the
/// `pair_norm` metadata written by correlate.
CorrelationTrace rebin(const CorrelationTrace& trace, std::size_t factor);

}  // namespace cqed
