#pragma once

#include <vector>

#include "dmpm/state_space.hpp"

namespace dmpm {

/// Per-coordinate score s_t(x) at backward time t. Every entry satisfies s <= 1.
struct ScoreVector {
  std::vector<double> values;
  double t = 0.0;
};

/// Per-coordinate posterior flip probability d_t(x), entries in [0,1].
struct DenoiserVector {
  std::vector<double> values;
  double t = 0.0;
};

/// Affine map between denoiser and score at one backward time:
/// s = offset - slope * d, with offset = 2a/(1+a), slope = 4a/(1-a^2), a = alpha_{T_f - t}.
struct ScoreAffine {
  double alpha = 0.0;
  double offset = 0.0;
  double slope = 0.0;
  double forward_time = 0.0;
  bool clamped = false;  // forward time was raised to kForwardTimeGuard
};

/// Coefficients at backward time t with the forward time clamped to >= kForwardTimeGuard.
ScoreAffine score_affine(double t, double lambda, double t_f);

/// Regression target f for one coordinate given the clean and noised bits.
double f_target(double t, int x0_bit, int xt_bit, double lambda, double t_f, bool* clamped = nullptr);

/// Exact denoiser by Bayes over the enumerable data law (closed form per bit for product laws).
DenoiserVector exact_denoiser(const Distribution& mu0, double t, const BitState& x, double lambda, double t_f);

/// Exact score from the mass ratio 1 - mu(phi x)/mu(x) of the forward marginal at time T_f - t.
ScoreVector exact_score(const Distribution& mu0, double t, const BitState& x, double lambda, double t_f);

/// Exact score as the posterior expectation of f_target, by brute-force enumeration.
/// Independent of exact_score; requires forward time T_f - t > 0.
ScoreVector score_conditional_expectation(const Distribution& mu0, double t, const BitState& x, double lambda,
                                          double t_f);

ScoreVector score_from_denoiser(const DenoiserVector& dvec, double t, double lambda, double t_f);

struct BackwardRates {
  double total = 0.0;
  std::vector<double> weights;  // sums to 1 when total > 0; empty otherwise
};

/// Total jump rate lambda * sum(1 - s) and the categorical flip weights.
BackwardRates backward_rates(const ScoreVector& s, double lambda);

/// Same, from raw per-coordinate score values.
BackwardRates backward_rates(const std::vector<double>& s, double lambda);

}  // namespace dmpm
