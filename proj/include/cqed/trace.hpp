#pragma once

#include <Eigen/Dense>
#include <map>
#include <ostream>
#include <string>

namespace cqed {

/// A sampled correlation function g2(tau).
///
/// `stderr_` is empty for noiseless (model) traces; `pairs` is populated only
/// by the timestamp correlator.
struct CorrelationTrace {
  Eigen::VectorXd tau;     ///< delay grid [us]
  Eigen::VectorXd g2;
  Eigen::VectorXd stderr_;
  Eigen::VectorXd pairs;   ///< raw coincidence counts per bin
  double bin_width_us = 0.0;
  std::map<std::string, std::string> metadata;

  Eigen::Index size() const { return tau.size(); }
  bool has_errors() const { return stderr_.size() == g2.size() && g2.size() > 0; }
  bool has_pairs() const { return pairs.size() == g2.size() && g2.size() > 0; }
};

/// Shortest round-trip decimal representation of `x`.
std::string format_double(double x);

/// Writes `tau_us,g2,stderr` (plus `pairs` when present). Metadata become
/// leading `# key: value` comment lines, followed by any extra header lines.
void write_trace_csv(std::ostream& os, const CorrelationTrace& trace, const std::string& extra_header = {});
void write_trace_csv(const std::string& path, const CorrelationTrace& trace, const std::string& extra_header = {});

/// Reads the CSV written by write_trace_csv; comment lines are skipped.
CorrelationTrace read_trace_csv(const std::string& path);

}  // namespace cqed
