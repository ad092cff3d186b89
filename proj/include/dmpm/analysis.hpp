#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmpm/samplers.hpp"
#include "dmpm/score_source.hpp"
#include "dmpm/state_space.hpp"

namespace dmpm {

struct Divergences {
  double kl = 0.0;  // KL(p | q); +infinity when p charges a q-null state
  double tv = 0.0;  // sum_x |p(x) - q(x)|, in [0, 2]
};

Divergences divergences(const DenseTable& p, const DenseTable& q);

/// KL(mu | uniform on {0,1}^d).
double kl_to_uniform(const DenseTable& mu);

struct SWDEstimate {
  double value = 0.0;
  std::size_t n_directions = 0;
  double std_error = 0.0;  // sample standard deviation over directions / sqrt(n_directions)
};

inline constexpr std::size_t kDefaultSwdDirections = 1000;

/// Sliced Wasserstein-1 distance averaged over directions drawn uniformly on the simplex.
SWDEstimate swd(const EmpiricalSet& a, const EmpiricalSet& b, std::size_t n_directions, Rng& rng);

/// E_mu[sum_l h(mu(phi^l X) / mu(X))] with h(a) = a log a - a + 1. Throws kAssumptionViolation
/// if mu has a zero-mass state.
double fisher_like_beta(const DenseTable& mu);

/// h(a) = a log a - a + 1, with h(0) = 1.
double entropy_h(double a);

struct BoundReport {
  double kl_init = 0.0;
  double beta = 0.0;
  double tau = 0.0;
  double eps = 0.0;
  double t_f = 0.0;
  double eta = 0.0;  // 0 for Theorem 2.3; early-stopping horizon reduction otherwise
  double bound = 0.0;
  std::optional<double> measured_kl;

  /// Recomputes the bound from the fields above.
  double recompute() const;
  std::string to_json() const;
};

/// e^{-T_f} kl_init + tau * beta + eps * T_f.
BoundReport theorem_bound(double kl_init, double beta, double tau, double eps, double t_f);
/// Early-stopped variant: beta is that of mu_eta and eps multiplies T_f - eta.
BoundReport theorem_bound_early_stop(double kl_init, double beta_eta, double tau, double eps, double t_f,
                                     double eta);

struct TvBound {
  double exact = 0.0;  // 2 - 2 (1/2 + e^{-2 lambda eta}/2)^d
  double loose = 0.0;  // 2 - 2 (1 - lambda eta)^d, with (1 - lambda eta) floored at 0
};

TvBound tv_early_stop_bound(double eta, double lambda, std::size_t d);

struct StepPlan {
  double h = 0.0;
  std::uint64_t k = 0;
  double t_f = 0.0;
};

/// Largest h and smallest K with h <= eps / (2 beta) and K >= log(2 kl / eps) / h.
StepPlan plan_steps(double eps, double kl_init, double beta);

struct EarlyStopPlan {
  double eta = 0.0;
  double h = 0.0;
  std::uint64_t k = 0;
  double horizon = 0.0;  // T_f - eta = h * K
};

EarlyStopPlan plan_early_stop(double eps, std::size_t d, double lambda, double kl_init);

inline constexpr std::size_t kExactPropagationLimit = 10;

/// Exact law of the piecewise-constant backward chain: on each [t_k, t_{k+1}) the generator uses
/// rates lambda (1 - s_{t_k}) from `src`, and the law is propagated by uniformization.
/// If `per_step` is non-null it receives the law at every grid point t_0..t_K.
DenseTable exact_backward_marginal(const ScoreSource& src, const TimeSchedule& schedule,
                                   std::vector<std::vector<double>>* per_step = nullptr);

struct EpsilonEstimate {
  double value = 0.0;       // max over grid points
  double std_error = 0.0;   // at the maximizing grid point (0 for the exact computation)
  std::size_t argmax = 0;   // grid index of the max
  std::vector<double> per_step;
};

/// Assumption-2.1 quantity E[sum_l (1 - s_approx) h((1 - s_exact)/(1 - s_approx))] at each t_k,
/// with the expectation taken under exact per-step laws of the approximate chain.
EpsilonEstimate epsilon_exact(const ScoreSource& approx, const ScoreSource& exact, const TimeSchedule& schedule);

/// Same quantity estimated by Monte Carlo along Algorithm-3 trajectories of `approx`.
EpsilonEstimate estimate_epsilon(const ScoreSource& approx, const ScoreSource& exact, const TimeSchedule& schedule,
                                 std::size_t n_chains, std::uint64_t seed);

/// Pearson chi-square of samples against expected probabilities (cells with zero expectation must
/// be empty). z = (chi2 - dof) / sqrt(2 dof).
struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double z = 0.0;
};
ChiSquare chi_square(const EmpiricalSet& samples, const DenseTable& expected);

/// Random full-support law: Dirichlet(1, ..., 1) weights on {0,1}^d.
DenseTable random_full_support(std::size_t d, Rng& rng);

// --- Validation sweeps -------------------------------------------------------

struct TheoremSweepConfig {
  std::vector<std::size_t> dims{2, 3, 4};
  std::vector<std::size_t> steps{25, 100, 400};
  std::size_t n_instances = 20;  // random laws per dimension
  double t_f = 4.0;
  double lambda = 1.0;
  ScheduleKind schedule = ScheduleKind::kLinear;
  double corrupt_shift = 0.0;  // > 0 replaces the exact score by a shifted one
  std::uint64_t seed = 0;
};

struct TheoremSweepRow {
  std::string instance;
  std::size_t d = 0;
  std::size_t k = 0;
  BoundReport report;     // report.measured_kl is set; eps is 0 unless corrupted
  double bound_eps0 = 0.0;
  double slack = 0.0;     // bound - measured
  bool violated = false;  // measured > bound (1e-12 tolerance)
};

std::vector<TheoremSweepRow> theorem_sweep(const TheoremSweepConfig& config);

struct TvSweepConfig {
  std::vector<std::size_t> dims{2, 3, 4, 5, 6};
  std::size_t n_instances = 6;  // per dimension, plus one point mass (the tight case)
  std::vector<double> etas;     // default: 20 points 0.025 .. 0.5
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

struct TvSweepRow {
  std::string instance;
  std::size_t d = 0;
  double eta = 0.0;
  double tv_measured = 0.0;
  TvBound bound;
  double slack = 0.0;
  bool violated = false;
};

std::vector<TvSweepRow> tv_sweep(const TvSweepConfig& config);

}  // namespace dmpm
