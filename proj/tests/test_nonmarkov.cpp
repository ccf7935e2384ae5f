#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cqed/error.hpp"
#include "cqed/nonmarkov.hpp"
#include "cqed/units.hpp"

using namespace cqed;

namespace {

constexpr double kQuarter = kTwoPi / 4.0;

ReducedChannel max_coupled(double n) {
  const auto p = RateParams::reference();
  if (n == 0.0) {
    const std::vector<DetuningClass> empty{{0.0, 0.0, 1.0}};
    return ReducedChannel::single(p, empty);
  }
  const std::vector<DetuningClass> c{DetuningClass::identical(p.g_max, n)};
  return ReducedChannel::single(p, c);
}

std::vector<AtomRealization> beam_sample(double n_eff, std::size_t count, std::uint64_t seed) {
  auto beam = BeamConfig::defaults();
  beam.target_n_eff = n_eff;
  beam.realizations = count;
  beam.seed = seed;
  return sample_ensemble(ModeGeometry{}, beam, RateParams::reference());
}

}  // namespace

TEST_CASE("trace distance for the special pairs") {
  const auto ch = max_coupled(1.0);
  for (double t : {0.0, 0.03, 0.1, 0.2, 0.5}) {
    const auto s = ch.at(t);
    CHECK(trace_distance(ch, StatePair{0.0, 0.0}, t) == doctest::Approx(s.p).epsilon(1e-14));
    CHECK(trace_distance(ch, StatePair{kQuarter, 0.0}, t) == doctest::Approx(std::abs(s.g)).epsilon(1e-12));
    const double th = 0.6;
    const double expect = std::sqrt(s.p * s.p * std::cos(th) * std::cos(th) + std::norm(s.g) * std::sin(th) * std::sin(th));
    CHECK(trace_distance(ch, StatePair{th, 1.3}, t) == doctest::Approx(expect).epsilon(1e-14));
    // phi does not enter
    CHECK(trace_distance(ch, StatePair{th, 0.0}, t) == trace_distance(ch, StatePair{th, 2.0}, t));
  }
}

TEST_CASE("empty cavity decays monotonically") {
  const auto ch = max_coupled(0.0);
  const double kappa = RateParams::reference().kappa;
  for (double t : {0.0, 0.01, 0.1, 0.3, 0.8})
    CHECK(std::abs(trace_distance(ch, StatePair{kQuarter, 0.0}, t) - std::exp(-kappa * t)) < 1e-12);
  const auto r = blp_measure(ch);
  CHECK(r.measure == 0.0);
  CHECK(r.quadrature == 0.0);
}

TEST_CASE("channel invariants") {
  const auto p = RateParams::reference();
  const auto ens = beam_sample(2.0, 30, 3);
  const std::vector<ReducedChannel> channels{max_coupled(0.3), max_coupled(3.0),
                                             ReducedChannel::averaged(p, ens, 1)};
  for (const auto& ch : channels) {
    const auto s0 = ch.at(0.0);
    CHECK(std::abs(s0.g - cdouble(1.0)) < 1e-12);
    CHECK(std::abs(s0.p - 1.0) < 1e-12);
    for (int i = 0; i <= 400; ++i) {
      const double t = 1.2 * i / 400.0;
      const auto s = ch.at(t);
      CHECK(s.p <= 1.0 + 1e-12);
      CHECK(std::norm(s.g) <= s.p * (1.0 + 1e-12) + 1e-300);
      for (double th : {0.0, 0.5, kQuarter}) {
        const double d = trace_distance(ch, StatePair{th, 0.0}, t);
        CHECK(d >= 0.0);
        CHECK(d <= 1.0 + 1e-12);
      }
    }
    for (double th : {0.0, 0.5, kQuarter}) CHECK(trace_distance(ch, StatePair{th, 0.0}, 0.0) == doctest::Approx(1.0));
  }
}

TEST_CASE("rate is the derivative of the distance") {
  const auto ch = max_coupled(1.0);
  const StatePair pair{0.9, 0.0};
  for (double t : {0.02, 0.07, 0.21, 0.4}) {
    const double h = 1e-6;
    const double fd = (trace_distance(ch, pair, t + h) - trace_distance(ch, pair, t - h)) / (2.0 * h);
    CHECK(trace_distance_rate(ch, pair, t) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("measure vanishes in the overdamped regime") {
  const double threshold = oscillation_threshold(RateParams::reference());
  CHECK(threshold == doctest::Approx(0.0549).epsilon(0.01));
  for (double n : {0.01, 0.03, 0.05, 0.9 * threshold}) {
    const auto r = blp_measure(max_coupled(n));
    CHECK(r.measure == 0.0);
    CHECK(std::abs(r.quadrature) < 1e-12);
  }
}

TEST_CASE("single atom: positive measure and the two paths agree") {
  const auto ch = max_coupled(1.0);
  const auto r = blp_measure(ch);
  CHECK(r.measure > 0.01);
  CHECK(std::abs(r.measure - r.quadrature) < 1e-6);
  CHECK(r.measure >= r.population_pair);
  CHECK(r.measure >= r.coherence_pair);
  // Each pair on its own, both paths.
  for (double th : {0.0, 0.4, 1.0, kQuarter}) {
    const StatePair pair{th, 0.0};
    CHECK(std::abs(blp_increase_sum(ch, pair) - blp_positive_rate_integral(ch, pair)) < 1e-6);
  }
}

TEST_CASE("threshold of the maximally coupled measure") {
  const double threshold = oscillation_threshold(RateParams::reference());
  double first_positive = -1.0;
  for (double n = 0.02; n <= 1.5; n += 0.02) {
    const auto r = blp_measure(max_coupled(n));
    CHECK(std::abs(r.measure - r.quadrature) < 1e-6);
    if (r.measure > 0.0 && first_positive < 0.0) first_positive = n;
    if (first_positive > 0.0) CHECK(r.measure > 0.0);
  }
  REQUIRE(first_positive > 0.0);
  CHECK(first_positive >= threshold);

  // grows with the atom number
  double last = 0.0;
  for (double n : {0.3, 0.6, 1.0, 2.0, 4.0, 8.0}) {
    const double m = blp_measure(max_coupled(n)).measure;
    CHECK(m > last);
    last = m;
  }
}

TEST_CASE("averaged channel matches the averaged kernel") {
  const auto p = RateParams::reference();
  const auto ens = beam_sample(1.5, 40, 9);
  const auto ch = ReducedChannel::averaged(p, ens, 2);
  std::vector<double> t;
  for (int i = 0; i <= 60; ++i) t.push_back(0.02 * i);
  const auto k = averaged_kernel(ens, p, t, 1);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto s = ch.at(t[i]);
    CHECK(std::abs(s.g - k.mean[i]) < 1e-8);
    CHECK(std::abs(s.p - k.mean_sq[i]) < 1e-8);
  }
}

TEST_CASE("averaging suppresses backflow") {
  const auto p = RateParams::reference();
  const auto ens = beam_sample(2.0, 100, 21);
  std::vector<double> singles;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto ch = ReducedChannel::averaged(p, std::span<const AtomRealization>(&ens[i], 1), 1);
    singles.push_back(blp_measure(ch).measure);
  }
  std::nth_element(singles.begin(), singles.begin() + 50, singles.end());
  const double upper = singles[50];
  std::nth_element(singles.begin(), singles.begin() + 49, singles.begin() + 50);
  const double median = 0.5 * (singles[49] + upper);
  const auto avg = blp_measure(ReducedChannel::averaged(p, ens, 1));
  CHECK(std::abs(avg.measure - avg.quadrature) < 1e-6);
  CHECK(avg.measure <= median);
}

TEST_CASE("coupling curve") {
  auto beam = BeamConfig::defaults();
  beam.realizations = 20;
  beam.seed = 4;
  const std::vector<double> grid{0.0, 0.052, 1.0, 3.0};
  const auto p = RateParams::reference();
  const auto curve = blp_vs_coupling(ModeGeometry{}, beam, p, grid);
  REQUIRE(curve.size() == 4);
  CHECK(curve[0].averaged.measure == 0.0);
  CHECK(curve[0].max_coupled.measure == 0.0);
  CHECK(curve[0].omega_vr_mhz == 0.0);
  CHECK(curve[1].omega_vr_mhz == 0.0);
  CHECK(curve[1].max_coupled.measure == 0.0);
  CHECK(curve[2].omega_vr_mhz == doctest::Approx(rad_per_us_to_mhz(rabi_oscillation_frequency(p, 1.0))));
  CHECK(curve[3].max_coupled.measure > curve[2].max_coupled.measure);

  beam.workers = 1;
  const auto a = blp_vs_coupling(ModeGeometry{}, beam, p, grid);
  beam.workers = 3;
  const auto b = blp_vs_coupling(ModeGeometry{}, beam, p, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(a[i].averaged.measure == b[i].averaged.measure);

  const std::vector<double> bad{1.0, -0.5};
  CHECK_THROWS_AS(blp_vs_coupling(ModeGeometry{}, beam, p, bad), InputError);
}

TEST_CASE("input checks") {
  const auto ch = max_coupled(1.0);
  CHECK_THROWS_AS(trace_distance(ch, StatePair{-0.1, 0.0}, 0.1), InputError);
  CHECK_THROWS_AS(trace_distance(ch, StatePair{2.0, 0.0}, 0.1), InputError);
  CHECK_THROWS_AS(ReducedChannel(std::vector<ExpSum>{}), InputError);
}
