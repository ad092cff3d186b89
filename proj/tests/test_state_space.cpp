#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <functional>
#include <cmath>

#include "dmpm/state_space.hpp"

using namespace dmpm;

namespace {
ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kArgument;
}
}  // namespace

TEST_CASE("bit states: string and index round trips") {
  const BitState x = BitState::from_string("0110");
  CHECK(x.dim() == 4);
  CHECK(x.to_string() == "0110");
  CHECK(x.to_index() == 6);  // bit i of the index is coordinate i
  CHECK(BitState::from_index(6, 4) == x);
  for (std::uint64_t i = 0; i < 32; ++i) CHECK(BitState::from_index(i, 5).to_index() == i);
  CHECK(code_of([] { BitState::from_string("01a"); }) == ErrorCode::kArgument);
}

TEST_CASE("flip is an involution at Hamming distance one") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const BitState x = uniform_state(7, rng);
    const std::size_t l = rng.index(7);
    CHECK(flip(flip(x, l), l) == x);
    CHECK(hamming(x, flip(x, l)) == 1);
  }
}

TEST_CASE("sawtooth parameters") {
  const auto p2 = sawtooth_params(2).probs();
  CHECK(p2[0] == doctest::Approx(0.05));
  CHECK(p2[1] == doctest::Approx(0.95));
  const auto p16 = sawtooth_params(16).probs();
  CHECK(*std::max_element(p16.begin(), p16.end()) == doctest::Approx(0.95));
  CHECK(*std::min_element(p16.begin(), p16.end()) == doctest::Approx(0.05));
  int local_max = 0;
  for (std::size_t i = 0; i < p16.size(); ++i) {
    const bool left = i == 0 || p16[i] > p16[i - 1];
    const bool right = i + 1 == p16.size() || p16[i] > p16[i + 1];
    if (left && right) ++local_max;
  }
  CHECK(local_max == 1);
  CHECK(code_of([] { sawtooth_params(1); }) == ErrorCode::kArgument);
}

TEST_CASE("product law enumerates to a normalized table") {
  const ProductBernoulli mu({0.2, 0.7, 0.5});
  const DenseTable t = to_table(mu);
  double total = 0.0;
  for (double m : t.mass()) total += m;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(t.at(BitState::from_string("010")) == doctest::Approx(0.8 * 0.7 * 0.5));
  CHECK(prob(mu, BitState::from_string("111")) == doctest::Approx(0.2 * 0.7 * 0.5));
  CHECK(code_of([] { ProductBernoulli({0.0, 0.5}); }) == ErrorCode::kArgument);
}

TEST_CASE("dense tables validate their masses") {
  CHECK(code_of([] { DenseTable(2, {0.5, 0.5, 0.5, 0.5}); }) == ErrorCode::kArgument);
  CHECK(code_of([] { DenseTable(2, {0.5, 0.5}); }) == ErrorCode::kDimensionMismatch);
  const DenseTable n = DenseTable::normalized(1, {1.0, 3.0});
  CHECK(n[1] == doctest::Approx(0.75));
  CHECK(DenseTable::uniform(3)[5] == doctest::Approx(0.125));
  CHECK(DenseTable::point_mass(BitState::from_string("11"))[3] == 1.0);
  CHECK(code_of([] { check_enumerable(40); }) == ErrorCode::kEnumerationLimit);
}

TEST_CASE("sampling a product law reproduces its marginals") {
  Rng rng(2);
  const ProductBernoulli mu({0.1, 0.9, 0.5});
  const EmpiricalSet s = sample(mu, 50000, rng);
  for (std::size_t l = 0; l < 3; ++l) {
    double ones = 0;
    for (const auto& x : s.samples()) ones += x[l];
    CHECK(ones / s.size() == doctest::Approx(mu.probs()[l]).epsilon(0.02));
  }
  const DenseTable h = s.histogram();
  CHECK(h.size() == 8);
}

TEST_CASE("seeded streams are reproducible and named streams differ") {
  Rng a(derive_seed(9, "x")), b(derive_seed(9, "x")), c(derive_seed(9, "y"));
  const double ua = a.uniform();
  CHECK(ua == b.uniform());
  CHECK(ua != c.uniform());
  CHECK(derive_seed(9, "x", 1) != derive_seed(9, "x", 2));
}
