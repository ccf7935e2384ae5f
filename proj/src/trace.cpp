#include "cqed/trace.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "cqed/error.hpp"

namespace cqed {

std::string format_double(double x) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

void write_trace_csv(std::ostream& os, const CorrelationTrace& trace, const std::string& extra_header) {
  for (const auto& [k, v] : trace.metadata) os << "# " << k << ": " << v << "\n";
  if (!extra_header.empty()) os << extra_header;
  const bool pairs = trace.has_pairs();
  os << "tau_us,g2,stderr" << (pairs ? ",pairs" : "") << "\n";
  for (Eigen::Index i = 0; i < trace.size(); ++i) {
    os << format_double(trace.tau[i]) << ',' << format_double(trace.g2[i]) << ','
       << format_double(trace.has_errors() ? trace.stderr_[i] : 0.0);
    if (pairs) os << ',' << format_double(trace.pairs[i]);
    os << '\n';
  }
}

void write_trace_csv(const std::string& path, const CorrelationTrace& trace, const std::string& extra_header) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  write_trace_csv(out, trace, extra_header);
}

CorrelationTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trace file '" + path + "'");
  std::vector<std::array<double, 4>> rows;
  std::string line;
  bool header_seen = false;
  bool has_pairs = false;
  std::size_t line_no = 0;
  CorrelationTrace trace;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon != std::string::npos && colon > 2) {
        const auto value_start = line.find_first_not_of(' ', colon + 1);
        trace.metadata[line.substr(2, colon - 2)] =
            value_start == std::string::npos ? std::string{} : line.substr(value_start);
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("tau_us,g2", 0) != 0) throw InputError(path + ": missing 'tau_us,g2,...' header");
      has_pairs = line.find("pairs") != std::string::npos;
      header_seen = true;
      continue;
    }
    std::array<double, 4> row{0, 0, 0, 0};
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',') && col < 4) {
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), row[col]);
      if (res.ec != std::errc()) throw InputError(path + ": bad number on line " + std::to_string(line_no));
      ++col;
    }
    if (col < 2) throw InputError(path + ": too few columns on line " + std::to_string(line_no));
    rows.push_back(row);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  trace.tau.resize(n);
  trace.g2.resize(n);
  trace.stderr_.resize(n);
  if (has_pairs) trace.pairs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    trace.tau[i] = rows[i][0];
    trace.g2[i] = rows[i][1];
    trace.stderr_[i] = rows[i][2];
    if (has_pairs) trace.pairs[i] = rows[i][3];
  }
  if (trace.stderr_.size() > 0 && trace.stderr_.isZero()) trace.stderr_.resize(0);
  if (n > 1) trace.bin_width_us = trace.tau[1] - trace.tau[0];
  return trace;
}

}  // namespace cqed
