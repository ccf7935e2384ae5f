#pragma once

#include <numbers>

namespace cqed {

// All rates are stored internally as angular frequencies in rad/us. Config files
// and CSV columns quote ordinary frequencies nu = omega / 2pi in MHz.
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double mhz_to_rad_per_us(double nu_mhz) { return kTwoPi * nu_mhz; }
constexpr double rad_per_us_to_mhz(double omega) { return omega / kTwoPi; }

// Timestamps are integer picoseconds.
inline constexpr double kPsPerUs = 1.0e6;
inline constexpr double kPsPerNs = 1.0e3;

}  // namespace cqed
