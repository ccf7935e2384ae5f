#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "cqed/correlator.hpp"
#include "cqed/error.hpp"
#include "support.hpp"

using namespace cqed;
using cqed::testing::brute_force_pairs;
using cqed::testing::poisson_stream;

namespace {

// Poisson clicks with a burst of near neighbours, so that many bins are populated.
ClickStream clustered(std::size_t n, std::uint64_t seed, std::uint16_t detector = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> spread(0, 200'000'000);
  std::uniform_int_distribution<std::uint64_t> near(1, 3000);
  std::vector<std::uint64_t> t;
  while (t.size() < n) {
    const std::uint64_t base = spread(rng);
    t.push_back(base);
    if (t.size() < n && rng() % 3 == 0) t.push_back(base + near(rng));
  }
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  ClickStream s;
  s.timestamps = t;
  s.duration_ps = 200'010'000;
  s.detector = detector;
  return s;
}

std::vector<std::uint64_t> as_counts(const Eigen::VectorXd& pairs) {
  std::vector<std::uint64_t> out;
  for (Eigen::Index i = 0; i < pairs.size(); ++i) out.push_back(static_cast<std::uint64_t>(pairs[i]));
  return out;
}

}  // namespace

TEST_CASE("pair counts equal brute-force enumeration") {
  const auto a = clustered(6000, 1);
  const auto b = clustered(4000, 2, 1);
  for (double bin_ns : {0.25, 1.0, 7.0}) {
    CorrelatorConfig cfg;
    cfg.bin_width_ns = bin_ns;
    cfg.tau_max_us = 200 * bin_ns * 1e-3;
    cfg.mode = CorrelatorMode::Auto;
    const auto tr_auto = correlate(a, std::nullopt, cfg);
    const auto bf_auto = brute_force_pairs(a, std::nullopt, cfg);
    CHECK(as_counts(tr_auto.pairs) == bf_auto);

    cfg.mode = CorrelatorMode::Cross;
    cfg.fold = false;
    const auto tr_cross = correlate(a, b, cfg);
    const auto bf_cross = brute_force_pairs(a, b, cfg);
    CHECK(as_counts(tr_cross.pairs) == bf_cross);
    std::uint64_t total = 0;
    for (auto c : bf_cross) total += c;
    CHECK(total > 100);
  }
}

TEST_CASE("folded cross histogram adds the mirrored bins") {
  // Poisson pair counts, as the symmetry check assumes (the clustered fixture is overdispersed)
  const auto a = poisson_stream(3e-2, 2e5, 41);
  const auto b = poisson_stream(2e-2, 2e5, 42, 1);
  CorrelatorConfig cfg;
  cfg.bin_width_ns = 50.0;
  cfg.tau_max_us = 1.0;
  const auto bf = brute_force_pairs(a, b, cfg);
  const auto tr = correlate(a, b, cfg);
  const std::size_t n = cfg.bins();
  for (std::size_t k = 0; k < n; ++k)
    CHECK(tr.pairs[static_cast<Eigen::Index>(k)] == double(bf[n + k] + bf[n - 1 - k]));
  CHECK(tr.metadata.at("folded") == "true");
  CHECK(std::stoul(tr.metadata.at("symmetry_dof")) == n);
}

TEST_CASE("chunking does not change the histogram") {
  const auto a = clustered(8000, 5);
  const auto b = clustered(8000, 6, 1);
  CorrelatorConfig cfg;
  cfg.bin_width_ns = 1.0;
  cfg.tau_max_us = 0.5;
  cfg.fold = false;
  cfg.workers = 1;
  const auto one = correlate(a, b, cfg);
  for (unsigned w : {2u, 3u, 8u}) {
    cfg.workers = w;
    CHECK(correlate(a, b, cfg).pairs == one.pairs);
  }
}

TEST_CASE("independent Poisson streams are flat") {
  // 1e4 clicks/s each for 100 s
  const double rate = 0.01, duration = 1.0e8;
  const auto a = poisson_stream(rate, duration, 11);
  const auto b = poisson_stream(rate, duration, 12, 1);
  CorrelatorConfig cfg;
  cfg.bin_width_ns = 100.0;
  cfg.tau_max_us = 1.0;
  const auto tr = correlate(a, b, cfg);
  REQUIRE(tr.size() == 10);
  for (Eigen::Index i = 0; i < tr.size(); ++i) {
    INFO("bin " << i << " g2 " << tr.g2[i] << " +- " << tr.stderr_[i]);
    CHECK(std::abs(tr.g2[i] - 1.0) < 3.0 * tr.stderr_[i]);
  }
  cfg.mode = CorrelatorMode::Auto;
  const auto au = correlate(a, std::nullopt, cfg);
  for (Eigen::Index i = 0; i < au.size(); ++i) CHECK(std::abs(au.g2[i] - 1.0) < 3.0 * au.stderr_[i]);
}

TEST_CASE("doubled clicks give a single spike") {
  const auto base = poisson_stream(1e-3, 1.0e7, 3);
  ClickStream doubled = base;
  doubled.timestamps.clear();
  for (auto t : base.timestamps) {
    doubled.timestamps.push_back(t);
    doubled.timestamps.push_back(t + 50'000);
  }
  doubled.duration_ps = base.duration_ps + 50'000;
  CorrelatorConfig cfg;
  cfg.bin_width_ns = 10.0;
  cfg.tau_max_us = 0.2;
  cfg.mode = CorrelatorMode::Auto;
  const auto tr = correlate(doubled, std::nullopt, cfg);
  Eigen::Index peak = 0;
  tr.pairs.maxCoeff(&peak);
  CHECK(peak == 5);  // [50, 60) ns
  CHECK(tr.pairs[5] >= double(base.timestamps.size()));
  CHECK(tr.pairs.sum() - tr.pairs[5] < 0.01 * tr.pairs[5]);

  // a delayed copy is asymmetric in tau: folding refuses
  ClickStream shifted = base;
  for (auto& t : shifted.timestamps) t += 50'000;
  shifted.duration_ps += 50'000;
  shifted.detector = 1;
  cfg.mode = CorrelatorMode::Cross;
  CHECK_THROWS_AS(correlate(base, shifted, cfg), NumericalError);
  cfg.fold = false;
  const auto signed_tr = correlate(base, shifted, cfg);
  signed_tr.pairs.maxCoeff(&peak);
  CHECK(signed_tr.tau[peak] == doctest::Approx(0.055));
}

TEST_CASE("normalization ignores thinning") {
  const auto a = poisson_stream(0.05, 2.0e6, 21);
  const auto b = poisson_stream(0.05, 2.0e6, 22, 1);
  CorrelatorConfig cfg;
  cfg.bin_width_ns = 100.0;
  cfg.tau_max_us = 2.0;
  const auto full = correlate(a, b, cfg);
  const auto thin = correlate(thin_stream(a, 0.3, 1), thin_stream(b, 0.3, 2), cfg);
  CHECK(full.g2.mean() == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(thin.g2.mean() - 1.0) < 3.0 * thin.stderr_.mean() / std::sqrt(double(thin.size())));
}

TEST_CASE("input errors") {
  const auto a = poisson_stream(0.01, 1e5, 1);
  CorrelatorConfig cfg;
  ClickStream unsorted = a;
  std::swap(unsorted.timestamps[10], unsorted.timestamps[11]);
  try {
    correlate(unsorted, a, cfg);
    FAIL("unsorted input accepted");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("index 11") != std::string::npos);
  }
  ClickStream empty;
  empty.duration_ps = 1000;
  CHECK_THROWS_AS(correlate(empty, a, cfg), InputError);
  CHECK_THROWS_AS(correlate(a, std::nullopt, cfg), InputError);

  CorrelatorConfig bad = cfg;
  bad.tau_max_us = 0.05;  // five 10 ns bins
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = cfg;
  bad.bin_width_ns = 0.0005;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = cfg;
  bad.bin_width_ns = -1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);

  Config c;
  c.set("corr.mode", "sideways");
  CHECK_THROWS_AS(CorrelatorConfig::from_config(c), InputError);
}

TEST_CASE("rebin") {
  const auto a = poisson_stream(0.02, 5e6, 31);
  const auto b = poisson_stream(0.02, 5e6, 32, 1);
  CorrelatorConfig cfg;
  cfg.bin_width_ns = 10.0;
  cfg.tau_max_us = 1.2;
  const auto tr = correlate(a, b, cfg);

  const auto same = rebin(tr, 1);
  CHECK(same.pairs == tr.pairs);
  CHECK(same.g2 == tr.g2);
  CHECK(same.tau == tr.tau);

  const auto r4 = rebin(tr, 4);
  CHECK(r4.size() == tr.size() / 4);
  CHECK(r4.pairs.sum() == tr.pairs.sum());
  CHECK(r4.bin_width_us == doctest::Approx(0.04));
  CHECK(r4.tau[0] == doctest::Approx(0.02));
  CHECK(r4.g2.mean() == doctest::Approx(tr.g2.mean()).epsilon(1e-12));
  // flat input: errors shrink by sqrt(factor)
  CHECK(r4.stderr_.mean() == doctest::Approx(tr.stderr_.mean() / 2.0).epsilon(0.02));

  CHECK_THROWS_AS(rebin(tr, 7), InputError);
  CHECK_THROWS_AS(rebin(tr, 0), InputError);
}
