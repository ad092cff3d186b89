#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dmpm/analysis.hpp"
#include "dmpm/forward_process.hpp"
#include "dmpm/score_oracle.hpp"
#include "dmpm/score_source.hpp"

using namespace dmpm;

namespace {
// Backward time whose forward time T_f - t gives alpha = 1/2 at lambda = 1.
constexpr double kTf = 3.0;
const double kHalfAlphaT = kTf - std::log(2.0) / 2.0;
}  // namespace

TEST_CASE("one-bit worked example: p = 0.9, alpha = 1/2") {
  const Distribution mu0 = ProductBernoulli({0.9});
  const BitState one = BitState::from_string("1"), zero = BitState::from_string("0");
  CHECK(marginal(mu0, kTf - kHalfAlphaT, 1.0).at(one) == doctest::Approx(0.7));
  // P(x0 = 0 | x_t = 1) = 0.1 * 0.25 / 0.7
  CHECK(exact_denoiser(mu0, kHalfAlphaT, one, 1.0, kTf).values[0] == doctest::Approx(0.035714285714).epsilon(1e-10));
  CHECK(exact_score(mu0, kHalfAlphaT, one, 1.0, kTf).values[0] == doctest::Approx(0.571428571429).epsilon(1e-10));
  CHECK(exact_score(mu0, kHalfAlphaT, zero, 1.0, kTf).values[0] == doctest::Approx(-1.333333333333).epsilon(1e-10));
}

TEST_CASE("affine reparameterization and regression targets at alpha = 1/2") {
  const ScoreAffine a = score_affine(kHalfAlphaT, 1.0, kTf);
  CHECK(a.alpha == doctest::Approx(0.5));
  CHECK(a.offset == doctest::Approx(2.0 / 3.0));
  CHECK(a.slope == doctest::Approx(8.0 / 3.0));
  CHECK_FALSE(a.clamped);
  CHECK(f_target(kHalfAlphaT, 1, 1, 1.0, kTf) == doctest::Approx(2.0 / 3.0));
  CHECK(f_target(kHalfAlphaT, 0, 1, 1.0, kTf) == doctest::Approx(-2.0));
  bool clamped = false;
  f_target(kTf, 0, 0, 1.0, kTf, &clamped);
  CHECK(clamped);
  CHECK(score_affine(kTf, 1.0, kTf).forward_time == doctest::Approx(kForwardTimeGuard));
}

TEST_CASE("backward rates") {
  const BackwardRates r = backward_rates(std::vector<double>{0.5, -0.5}, 1.0);
  CHECK(r.total == doctest::Approx(2.0));
  CHECK(r.weights[0] == doctest::Approx(0.25));
  CHECK(r.weights[1] == doctest::Approx(0.75));
  const BackwardRates z = backward_rates(std::vector<double>{1.0, 1.0}, 1.0);
  CHECK(z.total == 0.0);
  CHECK(z.weights.empty());
  CHECK_THROWS_AS(backward_rates(std::vector<double>{1.5}, 1.0), Error);
}

TEST_CASE("ratio score, conditional expectation and denoiser agree") {
  Rng rng(6);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t d = 1 + inst % 5;
    const Distribution mu0 = random_full_support(d, rng);
    const double t = rng.uniform() * 2.9;
    const BitState x = uniform_state(d, rng);
    const auto a = exact_score(mu0, t, x, 1.0, kTf).values;
    const auto b = score_conditional_expectation(mu0, t, x, 1.0, kTf).values;
    const auto c = score_from_denoiser(exact_denoiser(mu0, t, x, 1.0, kTf), t, 1.0, kTf).values;
    for (std::size_t l = 0; l < d; ++l) {
      CHECK(std::abs(a[l] - b[l]) < 1e-12);
      CHECK(std::abs(a[l] - c[l]) < 1e-12);
      CHECK(a[l] <= 1.0);
    }
  }
}

TEST_CASE("uniform data has zero score and rate lambda per coordinate") {
  const Distribution u = DenseTable::uniform(3);
  const auto s = exact_score(u, 1.2, BitState::from_string("011"), 1.0, kTf).values;
  for (double v : s) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
}

TEST_CASE("exact oracle source matches the free functions and caches tables") {
  Rng rng(7);
  const DenseTable law = random_full_support(4, rng);
  const ExactOracle oracle(law, 1.0, kTf);
  for (int q = 0; q < 10; ++q) {
    const double t = rng.uniform() * 2.9;
    const BitState x = uniform_state(4, rng);
    const auto s1 = oracle.score(t, x).values;
    const auto s2 = exact_score(law, t, x, 1.0, kTf).values;
    const auto d1 = oracle.denoiser(t, x).values;
    const auto d2 = exact_denoiser(law, t, x, 1.0, kTf).values;
    for (std::size_t l = 0; l < 4; ++l) {
      CHECK(s1[l] == doctest::Approx(s2[l]).epsilon(1e-12));
      CHECK(d1[l] == doctest::Approx(d2[l]).epsilon(1e-12));
    }
  }
  // Product laws take the closed-form path.
  const ExactOracle prod(sawtooth_params(5), 1.0, kTf);
  const BitState x = BitState::from_string("10101");
  const auto sp = prod.score(1.0, x).values;
  const auto st = exact_score(Distribution(to_table(sawtooth_params(5))), 1.0, x, 1.0, kTf).values;
  for (std::size_t l = 0; l < 5; ++l) CHECK(sp[l] == doctest::Approx(st[l]).epsilon(1e-12));
}

TEST_CASE("unreachable states at the data end are reported") {
  const ExactOracle point(DenseTable::point_mass(BitState::from_string("00")), 1.0, kTf);
  CHECK_THROWS_AS(point.score(kTf, BitState::from_string("11")), Error);
}

TEST_CASE("shifted source raises every rate factor") {
  const ExactOracle oracle(sawtooth_params(3), 1.0, kTf);
  const ShiftedSource shifted(oracle, 0.25);
  const BitState x = BitState::from_string("110");
  const auto a = oracle.score(0.7, x).values;
  const auto b = shifted.score(0.7, x).values;
  for (std::size_t l = 0; l < 3; ++l) CHECK(b[l] == doctest::Approx(a[l] - 0.25));
}
