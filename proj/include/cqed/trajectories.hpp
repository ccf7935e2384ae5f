#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cqed/config.hpp"
#include "cqed/model.hpp"
#include "cqed/oracle.hpp"
#include "cqed/units.hpp"

namespace cqed {

/// Detector clicks as integer picoseconds since the start of acquisition.
struct ClickStream {
  std::vector<std::uint64_t> timestamps;
  std::uint64_t duration_ps = 0;
  std::uint16_t detector = 0;
  std::uint64_t params_hash = 0;  ///< not part of the binary format
  std::uint64_t seed = 0;         ///< not part of the binary format

  double duration_us() const { return static_cast<double>(duration_ps) / kPsPerUs; }
  /// Mean click rate [1/us].
  double rate() const;
  /// Throws InputError unless timestamps are strictly increasing and below the duration.
  void validate() const;
};

struct TrajectoryConfig {
  double duration_us = 1.0e4;
  double efficiency = 0.30;       ///< probability that an emitted photon is recorded
  double background_rate = 0.0;   ///< [1/us], summed over both detectors
  double split_ratio = 0.5;       ///< fraction of clicks routed to the first detector
  double dead_time_us = 0.0;      ///< non-paralyzable, per detector; 0 = off
  double burn_in_us = -1.0;       ///< unrecorded settling time; negative = 20 / slowest decay rate
  std::uint64_t seed = 1;

  /// Keys `traj.duration_us`, `traj.efficiency`, `traj.background_rate`,
  /// `traj.split_ratio`, `traj.dead_time_us`, `traj.burn_in_us`, `seed`.
  static TrajectoryConfig from_config(const Config& cfg);
  /// Throws InputError unless duration > 0, efficiency in [0, 1], background >= 0,
  /// split ratio in [0, 1] and dead time >= 0.
  void validate() const;
};

struct Synthesis {
  ClickStream first;   ///< detector 0
  ClickStream second;  ///< detector 1
  std::uint64_t emissions = 0;      ///< cavity jumps inside the recorded window
  std::uint64_t atomic_jumps = 0;   ///< spontaneous emissions inside the recorded window
  std::uint64_t background = 0;     ///< background clicks before dead time
};

/// Monte Carlo wave-function unraveling of the master equation in the oracle's
/// truncated basis. Cavity jumps sqrt(2 kappa) a are recorded with probability
/// `efficiency` and routed to one of the two detectors; atomic jumps sqrt(gamma)
/// sigma_j collapse the state without a record. Background clicks form an
/// independent Poisson process split the same way. Clicks that land on the same
/// picosecond of one detector are merged.
Synthesis mcwf_synthesize(const RateParams& params, std::span<const oracle::Atom> atoms, const TrajectoryConfig& cfg);

/// Steady-state detected rate efficiency * 2 kappa <a^dag a> + background [1/us],
/// summed over both detectors.
double expected_detected_rate(const RateParams& params, std::span<const oracle::Atom> atoms,
                              const TrajectoryConfig& cfg);

/// Keeps each click with probability `keep`.
ClickStream thin_stream(const ClickStream& stream, double keep, std::uint64_t seed);
/// Drops clicks closer than `dead_time_us` to the last kept click.
ClickStream apply_dead_time(const ClickStream& stream, double dead_time_us);

/// Binary stream format, little-endian: "CQTS", u16 version (1), u16 detector,
/// u64 count, u64 duration_ps, count x u64 timestamps.
std::string encode_stream(const ClickStream& stream);
/// Throws ParseError with the offset of the first bad byte.
ClickStream decode_stream(std::string_view bytes);
void write_stream(const ClickStream& stream, const std::string& path);
ClickStream read_stream(const std::string& path);

/// One timestamp in ps per line, after `# detector:` and `# duration_ps:` comment lines.
void write_stream_csv(const ClickStream& stream, const std::string& path);
/// Without a duration line the duration is one past the last timestamp.
ClickStream read_stream_csv(const std::string& path);

}  // namespace cqed
