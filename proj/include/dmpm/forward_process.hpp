#pragma once

#include <cstdint>
#include <vector>

#include "dmpm/state_space.hpp"

namespace dmpm {

struct ForwardParams {
  double lambda = 1.0;
  double t_f = 3.0;

  void validate() const;
};

/// One realization of the Poisson-clock forward chain on [0, T_f].
struct ForwardPath {
  BitState x0;
  std::vector<double> jump_times;         // strictly increasing, in (0, T_f]
  std::vector<std::size_t> jump_coords;   // 0-based coordinate flipped at each jump

  /// Replays the flips to obtain the state at time t.
  BitState state_at(double t) const;
  BitState terminal() const;
};

/// alpha_t = exp(-2 lambda t).
double alpha(double t, double lambda);

/// Single-bit transition probability P(X_t = b | X_0 = a).
double kernel1(int a, int b, double t, double lambda);

/// Product kernel over all coordinates.
double kernel(const BitState& x, const BitState& y, double t, double lambda);

/// Per-bit flip probability (1 - alpha_t)/2 of the conditional law.
double flip_probability(double t, double lambda);

/// Forward marginal of a product law stays a product law with p_i -> 1/2 + (p_i - 1/2) alpha_t.
ProductBernoulli marginal_product(const ProductBernoulli& mu0, double t, double lambda);

/// mu_t(x) = sum_z mu0(z) kernel(z, x, t) as a full table.
DenseTable marginal(const Distribution& mu0, double t, double lambda);

/// Applies the single-bit kernel along every axis of a 2^d table in place, O(d 2^d).
void propagate_table(std::vector<double>& mass, std::size_t d, double t, double lambda);

/// Flips each bit of x0 independently with probability (1 - alpha_t)/2.
BitState sample_conditional(const BitState& x0, double t, double lambda, Rng& rng);

/// Exact Poisson-clock simulation: every coordinate flips at rate lambda, so the number
/// of jumps is Poisson(lambda d T_f) with uniformly chosen coordinates.
ForwardPath simulate_path(const BitState& x0, const ForwardParams& params, Rng& rng);

}  // namespace dmpm
