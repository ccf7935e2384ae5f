#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cqed/dynamics.hpp"
#include "cqed/error.hpp"
#include "cqed/units.hpp"

using namespace cqed;
using doctest::Approx;

namespace {

std::vector<double> grid(double t_max, int n) {
  std::vector<double> t(n + 1);
  for (int i = 0; i <= n; ++i) t[i] = t_max * i / n;
  return t;
}

std::vector<DetuningClass> single(double n_atoms, double detuning = 0.0) {
  return {DetuningClass::identical(RateParams::reference().g_max, n_atoms, detuning)};
}

}  // namespace

TEST_CASE("class reduction") {
  AtomRealization r;
  r.g_max = 10.0;
  r.atoms = {{{0, 0, 0}, 3.0, 0}, {{1, 0, 0}, 4.0, 0}};
  auto cl = reduce_to_classes(r);
  REQUIRE(cl.size() == 1);
  CHECK(cl[0].coupling == Approx(5.0).epsilon(1e-15));
  CHECK(cl[0].atom_count == Approx(625.0 / 337.0));

  AtomRealization same;
  same.g_max = 2.0;
  for (int i = 0; i < 7; ++i) same.atoms.push_back({{0, 0, 0}, 2.0, 0});
  cl = reduce_to_classes(same);
  CHECK(cl[0].coupling == Approx(2.0 * std::sqrt(7.0)));
  CHECK(cl[0].atom_count == Approx(7.0));

  AtomRealization one;
  one.g_max = 2.0;
  one.atoms = {{{0, 0, 0}, 2.0, 0}};
  CHECK(reduce_to_classes(one)[0].coupling == 2.0);

  AtomRealization empty;
  cl = reduce_to_classes(empty);
  REQUIRE(cl.size() == 1);
  CHECK(cl[0].coupling == 0.0);

  AtomRealization zee;
  zee.class_detunings = {0.0, 31.4};
  zee.atoms = {{{0, 0, 0}, 3.0, 0}, {{0, 0, 0}, 1.5, 1}};
  cl = reduce_to_classes(zee);
  REQUIRE(cl.size() == 2);
  CHECK(cl[1].detuning == 31.4);
  CHECK(resolve_emitters(zee).size() == 2);
  zee.atoms.push_back({{0, 0, 0}, 1.0, 5});
  CHECK_THROWS_AS(reduce_to_classes(zee), InputError);
}

TEST_CASE("empty cavity driven from vacuum") {
  const auto p = RateParams::reference();
  const auto t = grid(0.5, 100);
  const std::vector<DetuningClass> none{};
  const auto states = integrate_driven(p, none, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double exact = p.eps / p.kappa * (1.0 - std::exp(-p.kappa * t[i]));
    CHECK(std::abs(states[i].a1 - exact) < 1e-10 * p.eps / p.kappa);
  }
}

TEST_CASE("driven steady state") {
  auto p = RateParams::reference();
  p.eps = 0.1 * p.kappa;
  const auto cl = single(1.0);
  const auto ss = steady_one_excitation(p, cl);
  const double c = p.g_max * p.g_max / (p.kappa * p.gamma);
  CHECK(ss.a1.real() == Approx(p.eps / (p.kappa * (1.0 + 2.0 * c))).epsilon(1e-12));
  CHECK(ss.a1.real() == Approx(0.0569).epsilon(1e-3));
  const auto states = integrate_driven(p, cl, grid(3.0, 3));
  CHECK(std::abs(states.back().a1 - ss.a1) < 1e-8);

  // detuned, two classes
  auto q = RateParams::reference();
  q.delta_c = 0.7 * q.kappa;
  std::vector<DetuningClass> two{{12.0, -5.0, 1.0}, {7.0, 20.0, 1.0}};
  const auto ss2 = steady_one_excitation(q, two);
  const auto st2 = integrate_driven(q, two, grid(4.0, 4));
  CHECK(std::abs(st2.back().a1 - ss2.a1) < 1e-8);
  CHECK((st2.back().b - ss2.b).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("one-excitation bright-mode reduction") {
  const auto p = RateParams::reference();
  std::vector<DetuningClass> pair{{3.0, 0.0, 1.0}, {4.0, 0.0, 1.0}};
  std::vector<DetuningClass> bright{{5.0, 0.0, 1.0}};
  const auto t = grid(1.0, 200);
  IntegratorOptions tight;
  tight.rel_tol = 1e-13;
  const auto a = integrate_driven(p, pair, t, tight);
  const auto b = integrate_driven(p, bright, t, tight);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(std::abs(a[i].a1 - b[i].a1) < 1e-10 * p.eps / p.kappa);
    const auto proj = (3.0 * a[i].b[0] + 4.0 * a[i].b[1]) / 5.0;
    CHECK(std::abs(proj - b[i].b[0]) < 1e-10 * p.eps / p.kappa);
  }
}

TEST_CASE("response kernel") {
  const auto p = RateParams::reference();
  const auto t = grid(1.0, 400);
  IntegratorOptions tight;
  tight.rel_tol = 1e-12;

  const std::vector<DetuningClass> none{};
  const auto bare = response_kernel(p, none, t, tight);
  CHECK(bare[0] == cdouble(1.0, 0.0));
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(bare[i] - std::exp(-p.kappa * t[i])) < 1e-10);
  // a class with zero coupling is the same bare cavity
  const auto zero = response_kernel(p, single(0.0), t, tight);
  CHECK(std::abs(zero[200] - std::exp(-p.kappa * t[200])) < 1e-10);

  for (double n : {0.02, 0.5, 1.0, 3.0}) {
    const auto k = response_kernel(p, single(n), t, tight);
    const auto d = derive(p, n);
    CHECK(k[0] == cdouble(1.0, 0.0));
    double worst = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
      worst = std::max(worst, std::abs(k[i] - closed_form_kernel(p.kappa, p.gamma, d.omega_vr, t[i])));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("second-order steady state") {
  auto p = RateParams::reference();
  p.eps = 0.01 * p.kappa;

  SUBCASE("empty cavity is coherent") {
    const auto ss = steady_two_excitation(p, single(0.0));
    const double alpha = p.eps / p.kappa;
    CHECK(std::abs(ss.second.a20 - alpha * alpha / std::sqrt(2.0)) < 1e-15);
    CHECK(ss.residual < 1e-12);
    const auto cond = conditioned_state(ss);
    CHECK(std::abs(cond.a1 - ss.first.a1) < 1e-15);
  }
  SUBCASE("collapse reproduces the closed-form g2(0)") {
    for (double n : {0.3, 1.0, 4.0}) {
      const auto ss = steady_two_excitation(p, single(n));
      CHECK(ss.residual < 1e-12);
      const auto d = derive(p, n);
      const cdouble ratio = std::sqrt(2.0) * ss.second.a20 / ss.first.a1;
      CHECK(std::abs(ratio - ss.first.a1 * (1.0 + d.delta_alpha_ratio)) < 1e-12 * std::abs(ss.first.a1));
    }
  }
  SUBCASE("single atoms have no doubly excited class amplitude") {
    std::vector<DetuningClass> atoms{{10.0, 0.0, 1.0}, {14.0, 3.0, 1.0}, {5.0, -8.0, 1.0}};
    const auto ss = steady_two_excitation(p, atoms);
    CHECK(ss.residual < 1e-12);
    CHECK(ss.second.bb.size() == 6);
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(std::abs(ss.second.bb[TwoExcitationState::pair_index(k, k, 3)]) == 0.0);
    CHECK(std::abs(ss.second.bb[TwoExcitationState::pair_index(0, 2, 3)]) > 0.0);
  }
  SUBCASE("weak-drive guard") {
    auto strong = p;
    strong.eps = 0.5 * p.kappa;
    CHECK_THROWS_AS(steady_two_excitation(strong, single(1.0)), InputError);
  }
}

TEST_CASE("g2 regression") {
  const auto p = RateParams::reference();
  const auto tau = grid(1.5, 600);

  const auto flat = g2_regression(p, single(0.0), tau);
  CHECK((flat.g2.array() - 1.0).abs().maxCoeff() < 1e-12);

  for (double n : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
    const auto tr = g2_regression(p, single(n), tau);
    const auto d = derive(p, n);
    const auto cf = g2_closed_form(p, d, tr.tau);
    CHECK((tr.g2 - cf.g2).cwiseAbs().maxCoeff() < 1e-9);
  }

  // long-time limit at tau = 20/kappa
  const std::vector<double> far{0.0, 20.0 / p.kappa};
  for (double n : {0.5, 1.0, 5.0}) CHECK(std::abs(g2_regression(p, single(n), far).g2[1] - 1.0) < 1e-4);

  auto off = p;
  off.eps = 0.0;
  CHECK_THROWS_AS(g2_regression(off, single(1.0), tau), NumericalError);
}

TEST_CASE("g2 regression merges emitters without changing the field") {
  const auto p = RateParams::reference();
  const auto tau = grid(0.8, 200);
  // identical atoms as separate emitters vs one class of two identical atoms
  std::vector<DetuningClass> emitters{{p.g_max, 0.0, 1.0}, {p.g_max, 0.0, 1.0}};
  const auto a = g2_regression(p, emitters, tau);
  const auto b = g2_regression(p, single(2.0), tau);
  CHECK((a.g2 - b.g2).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("stability and norm decay") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto p0 = RateParams::reference();
  for (int trial = 0; trial < 20; ++trial) {
    auto p = p0;
    p.delta_c = 2.5 * p.kappa * u(rng);
    std::vector<DetuningClass> cl;
    for (int k = 0; k < 3; ++k) cl.push_back({p.g_max * (1.5 + u(rng)), 2.5 * p.kappa * u(rng), 1.0});
    const auto ev = one_excitation_matrix(p, cl).eigenvalues();
    CHECK(ev.real().maxCoeff() < 0.0);

    OneExcitationState init{cdouble(0.3, -0.2), Eigen::VectorXcd::Random(3)};
    const auto t = grid(0.5, 100);
    const auto states = propagate_homogeneous(p, cl, init, t);
    double prev = std::norm(states[0].a1) + states[0].b.squaredNorm();
    for (const auto& s : states) {
      const double n = std::norm(s.a1) + s.b.squaredNorm();
      CHECK(n <= prev * (1.0 + 1e-12));
      prev = n;
    }
  }
}

TEST_CASE("transmission spectrum") {
  const auto p = RateParams::reference();
  SUBCASE("empty cavity Lorentzian") {
    std::vector<double> det;
    for (int i = -200; i <= 200; ++i) det.push_back(i * 0.5);
    const auto sp = transmission_spectrum(p, single(0.0), det);
    CHECK_FALSE(sp.split);
    REQUIRE(sp.peaks.size() == 1);
    CHECK(std::abs(sp.peaks[0]) < 1e-6);
    const double peak = std::pow(p.eps / p.kappa, 2);
    const double at_hwhm = transmission_spectrum(p, single(0.0), std::vector<double>{-p.kappa, 0.0, p.kappa}).intensity[0];
    CHECK(at_hwhm == Approx(peak / 2.0).epsilon(1e-12));
  }
  SUBCASE("peak positions match the analytic single-class spectrum") {
    // Brute-force scan of (gamma^2/4 + D^2) / |(kappa + iD)(gamma/2 + iD) + G^2|^2.
    for (double n : {1.0, 25.0}) {
      const double g_coll = p.g_max * std::sqrt(n);
      auto analytic = [&](double d) {
        const cdouble i(0.0, 1.0);
        const cdouble den = (p.kappa + i * d) * (p.gamma / 2.0 + i * d) + g_coll * g_coll;
        return (p.gamma * p.gamma / 4.0 + d * d) / std::norm(den);
      };
      double best = 0.0, best_d = 0.0;
      for (double d = 0.0; d < 3.0 * g_coll; d += 1e-4) {
        const double v = analytic(d);
        if (v > best) {
          best = v;
          best_d = d;
        }
      }
      std::vector<double> det;
      for (int k = -400; k <= 400; ++k) det.push_back(k * 3.0 * g_coll / 400.0);
      const auto sp = transmission_spectrum(p, single(n), det);
      REQUIRE(sp.split);
      CHECK(sp.separation == Approx(2.0 * best_d).epsilon(1e-4));
      CHECK(sp.peaks.front() == Approx(-sp.peaks.back()).epsilon(1e-8));
      // the peaks sit outside 2 g sqrt(N) and approach it only slowly with N
      CHECK(sp.separation > 2.0 * g_coll);
    }
  }
}
