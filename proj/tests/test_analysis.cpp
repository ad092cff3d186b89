#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dmpm/analysis.hpp"
#include "dmpm/forward_process.hpp"

using namespace dmpm;

TEST_CASE("KL and TV of a point mass against the uniform law") {
  const DenseTable delta = DenseTable::point_mass(BitState::from_string("000"));
  const DenseTable unif = DenseTable::uniform(3);
  const Divergences dv = divergences(delta, unif);
  CHECK(dv.kl == doctest::Approx(std::log(8.0)));
  CHECK(dv.tv == doctest::Approx(1.75));
  CHECK(std::isinf(divergences(unif, delta).kl));
  CHECK(kl_to_uniform(delta) == doctest::Approx(std::log(8.0)));
  CHECK(divergences(unif, unif).tv == 0.0);
}

TEST_CASE("Fisher-like beta and h") {
  // beta = 0.3 h(7/3) + 0.7 h(3/7), h(a) = a log a - a + 1
  CHECK(fisher_like_beta(DenseTable(1, {0.3, 0.7})) == doctest::Approx(0.338920).epsilon(1e-5));
  CHECK(fisher_like_beta(DenseTable::uniform(4)) == doctest::Approx(0.0).scale(1.0));
  CHECK(entropy_h(1.0) == doctest::Approx(0.0).scale(1.0));
  CHECK(entropy_h(0.0) == 1.0);
  CHECK_THROWS_AS(fisher_like_beta(DenseTable(1, {0.0, 1.0})), Error);
}

TEST_CASE("bound calculators") {
  const BoundReport r = theorem_bound(1.0, 0.1, 0.1, 0.01 / 3.0, 3.0);
  CHECK(r.bound == doctest::Approx(0.069787068).epsilon(1e-8));
  CHECK(r.recompute() == doctest::Approx(r.bound));
  const TvBound tv = tv_early_stop_bound(0.1, 1.0, 4);
  // 2 - 2 ((1 + e^{-0.2}) / 2)^4 = 0.6323227 (evaluated by hand)
  CHECK(tv.exact == doctest::Approx(0.6323227).epsilon(1e-6));
  CHECK(tv.loose == doctest::Approx(0.6878).epsilon(1e-12));
  CHECK(tv.exact <= tv.loose);
  CHECK(tv_early_stop_bound(5.0, 1.0, 3).loose == doctest::Approx(2.0));
}

TEST_CASE("step planning") {
  const StepPlan p = plan_steps(0.05, 0.025 * std::exp(3.0), 1.0);
  CHECK(p.h == doctest::Approx(0.025));
  CHECK(p.k == 120);
  CHECK(p.t_f == doctest::Approx(3.0));
  CHECK_THROWS_AS(plan_steps(0.0, 1.0, 1.0), Error);
  const EarlyStopPlan e = plan_early_stop(0.05, 4, 1.0, 1.0);
  CHECK(e.eta > 0.0);
  CHECK(e.horizon == doctest::Approx(e.h * e.k));
}

TEST_CASE("SWD") {
  Rng rng(1);
  const EmpiricalSet zeros(std::vector<BitState>(50, BitState::from_string("0000")));
  const EmpiricalSet ones(std::vector<BitState>(70, BitState::from_string("1111")));
  // Simplex directions sum to one, so every projection separates the sets by exactly 1.
  CHECK(swd(zeros, ones, 200, rng).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(swd(zeros, zeros, 20, rng).value == 0.0);
  const EmpiricalSet a = sample(sawtooth_params(6), 3000, rng), b = sample(sawtooth_params(6), 3000, rng);
  Rng r1(5), r2(5);
  CHECK(swd(a, b, 300, r1).value == doctest::Approx(swd(b, a, 300, r2).value).epsilon(1e-12));
}

TEST_CASE("SWD standard error shrinks as n_dirs^(-1/2)") {
  Rng rng(2);
  const EmpiricalSet a = sample(sawtooth_params(8), 2000, rng);
  const EmpiricalSet b = sample(ProductBernoulli(std::vector<double>(8, 0.5)), 2000, rng);
  std::vector<double> lx, ly;
  for (std::size_t n : {100, 400, 1600, 6400}) {
    Rng r(derive_seed(3, "dirs", n));
    const SWDEstimate e = swd(a, b, n, r);
    lx.push_back(std::log(double(n)));
    ly.push_back(std::log(e.std_error));
  }
  const double mx = (lx[0] + lx[1] + lx[2] + lx[3]) / 4, my = (ly[0] + ly[1] + ly[2] + ly[3]) / 4;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  CHECK(std::abs(sxy / sxx + 0.5) < 0.1);
}

TEST_CASE("self-distance of two d=16 sawtooth draws undercuts the learned-model scale") {
  Rng rng(4);
  const EmpiricalSet a = sample(sawtooth_params(16), 20000, rng), b = sample(sawtooth_params(16), 20000, rng);
  const SWDEstimate e = swd(a, b, 200, rng);
  MESSAGE("self SWD " << e.value << " +- " << e.std_error);
  CHECK(e.value < 2e-3);
}

TEST_CASE("exact backward marginal of the uniform law stays uniform") {
  const ExactOracle oracle(DenseTable::uniform(3), 1.0, 3.0);
  const DenseTable out = exact_backward_marginal(oracle, time_grid(ScheduleKind::kLinear, 10, 3.0));
  for (double m : out.mass()) CHECK(m == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("exact backward marginal converges to the data law as K grows") {
  Rng rng(5);
  const DenseTable law = random_full_support(3, rng);
  const ExactOracle oracle(law, 1.0, 4.0);
  double prev = INFINITY;
  for (std::size_t k : {10, 40, 160}) {
    const double kl = divergences(law, exact_backward_marginal(oracle, time_grid(ScheduleKind::kLinear, k, 4.0))).kl;
    CHECK(kl < prev);
    prev = kl;
  }
  CHECK(prev < 0.01);
}

TEST_CASE("Assumption 2.1 epsilon: zero for the exact score, positive when corrupted") {
  Rng rng(6);
  const ExactOracle oracle(random_full_support(3, rng), 1.0, 3.0);
  const TimeSchedule s = time_grid(ScheduleKind::kLinear, 20, 3.0);
  CHECK(epsilon_exact(oracle, oracle, s).value == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  const ShiftedSource bad(oracle, 0.3);
  const EpsilonEstimate e = epsilon_exact(bad, oracle, s);
  CHECK(e.value > 0.0);
  const EpsilonEstimate mc = estimate_epsilon(bad, oracle, s, 20000, 1);
  CHECK(std::abs(mc.value - e.value) < 5.0 * mc.std_error + 1e-3);
}

TEST_CASE("theorem sweep: no violations with the exact score, violations with a corrupted one") {
  TheoremSweepConfig cfg;
  cfg.dims = {2, 3};
  cfg.steps = {25, 100};
  cfg.n_instances = 4;
  for (const auto& r : theorem_sweep(cfg)) CHECK_FALSE(r.violated);
  // A corrupted score has eps > 0, so the bound loosens accordingly but must still hold.
  cfg.corrupt_shift = 0.5;
  for (const auto& r : theorem_sweep(cfg)) {
    CHECK(r.report.eps > 0.0);
    CHECK_FALSE(r.violated);
  }
}

TEST_CASE("TV sweep: the point mass attains the exact bound") {
  TvSweepConfig cfg;
  cfg.dims = {3};
  cfg.n_instances = 2;
  bool tight = false;
  for (const auto& r : tv_sweep(cfg)) {
    CHECK_FALSE(r.violated);
    if (std::abs(r.slack) < 1e-12) tight = true;
  }
  CHECK(tight);
}

TEST_CASE("chi-square of exact frequencies is zero") {
  std::vector<BitState> xs;
  for (std::uint64_t i = 0; i < 4; ++i)
    for (int r = 0; r < 25; ++r) xs.push_back(BitState::from_index(i, 2));
  const ChiSquare c = chi_square(EmpiricalSet(xs), DenseTable::uniform(2));
  CHECK(c.statistic == doctest::Approx(0.0).scale(1.0));
  CHECK(c.dof == 3);
}
