#include "dmpm/score_oracle.hpp"

#include <cmath>

#include "dmpm/forward_process.hpp"

namespace dmpm {

namespace {

double forward_time_of(double t, double t_f) {
  if (!(t >= 0.0) || !(t <= t_f)) {
    fail(ErrorCode::kArgument, "backward time " + std::to_string(t) + " outside [0, T_f]");
  }
  return t_f - t;
}

}  // namespace

ScoreAffine score_affine(double t, double lambda, double t_f) {
  ScoreAffine c;
  c.forward_time = forward_time_of(t, t_f);
  if (c.forward_time < kForwardTimeGuard) {
    c.forward_time = kForwardTimeGuard;
    c.clamped = true;
  }
  c.alpha = alpha(c.forward_time, lambda);
  c.offset = 2.0 * c.alpha / (1.0 + c.alpha);
  // 1 - a^2 = -expm1(-4 lambda tau), exact for small tau.
  c.slope = 4.0 * c.alpha / -std::expm1(-4.0 * lambda * c.forward_time);
  return c;
}

double f_target(double t, int x0_bit, int xt_bit, double lambda, double t_f, bool* clamped) {
  const ScoreAffine c = score_affine(t, lambda, t_f);
  if (clamped) *clamped = c.clamped;
  return x0_bit == xt_bit ? c.offset : c.offset - c.slope;
}

DenoiserVector exact_denoiser(const Distribution& mu0, double t, const BitState& x, double lambda,
                              double t_f) {
  const std::size_t d = dim(mu0);
  if (x.dim() != d) fail(ErrorCode::kDimensionMismatch, "exact_denoiser: dimension mismatch");
  const double tau = forward_time_of(t, t_f);
  const double q = flip_probability(tau, lambda);
  DenoiserVector out{std::vector<double>(d, 0.0), t};

  if (const auto* pb = std::get_if<ProductBernoulli>(&mu0)) {
    for (std::size_t l = 0; l < d; ++l) {
      const double p1 = pb->probs()[l];
      const double same = x[l] ? p1 : 1.0 - p1;
      const double other = 1.0 - same;
      const double joint_other = other * q;
      const double denom = same * (1.0 - q) + joint_other;
      if (!(denom > 0.0)) fail(ErrorCode::kUnreachableState, "exact_denoiser: state " + x.to_string() + " unreachable");
      out.values[l] = joint_other / denom;
    }
    return out;
  }

  const auto& table = std::get<DenseTable>(mu0);
  double denom = 0.0;
  for (std::size_t z = 0; z < table.size(); ++z) {
    if (table[z] == 0.0) continue;
    const BitState zs = BitState::from_index(z, d);
    const double w = table[z] * kernel(zs, x, tau, lambda);
    denom += w;
    for (std::size_t l = 0; l < d; ++l) {
      if (zs[l] != x[l]) out.values[l] += w;
    }
  }
  if (!(denom > 0.0)) {
    fail(ErrorCode::kUnreachableState, "exact_denoiser: state " + x.to_string() + " has zero forward mass");
  }
  for (double& v : out.values) v /= denom;
  return out;
}

ScoreVector exact_score(const Distribution& mu0, double t, const BitState& x, double lambda, double t_f) {
  const std::size_t d = dim(mu0);
  if (x.dim() != d) fail(ErrorCode::kDimensionMismatch, "exact_score: dimension mismatch");
  const double tau = forward_time_of(t, t_f);
  ScoreVector out{std::vector<double>(d, 0.0), t};

  if (const auto* pb = std::get_if<ProductBernoulli>(&mu0)) {
    const ProductBernoulli mt = marginal_product(*pb, tau, lambda);
    for (std::size_t l = 0; l < d; ++l) {
      const double p1 = mt.probs()[l];
      const double here = x[l] ? p1 : 1.0 - p1;
      out.values[l] = 1.0 - (1.0 - here) / here;
    }
    return out;
  }

  const DenseTable mt = marginal(mu0, tau, lambda);
  const std::uint64_t idx = x.to_index();
  const double mx = mt[idx];
  if (!(mx > 0.0)) fail(ErrorCode::kUnreachableState, "exact_score: state " + x.to_string() + " has zero forward mass");
  for (std::size_t l = 0; l < d; ++l) out.values[l] = 1.0 - mt[idx ^ (std::uint64_t{1} << l)] / mx;
  return out;
}

ScoreVector score_conditional_expectation(const Distribution& mu0, double t, const BitState& x, double lambda,
                                          double t_f) {
  const std::size_t d = dim(mu0);
  if (x.dim() != d) fail(ErrorCode::kDimensionMismatch, "score_conditional_expectation: dimension mismatch");
  const double tau = forward_time_of(t, t_f);
  require(tau > 0.0, "score_conditional_expectation needs forward time > 0");
  const DenseTable table = to_table(mu0);
  const double a = alpha(tau, lambda);
  const double f_same = 2.0 * a / (1.0 + a);
  const double f_diff = f_same - 4.0 * a / (1.0 - a * a);

  ScoreVector out{std::vector<double>(d, 0.0), t};
  double denom = 0.0;
  for (std::size_t z = 0; z < table.size(); ++z) {
    if (table[z] == 0.0) continue;
    const BitState zs = BitState::from_index(z, d);
    const double w = table[z] * kernel(zs, x, tau, lambda);
    denom += w;
    for (std::size_t l = 0; l < d; ++l) out.values[l] += w * (zs[l] == x[l] ? f_same : f_diff);
  }
  if (!(denom > 0.0)) fail(ErrorCode::kUnreachableState, "state " + x.to_string() + " has zero forward mass");
  for (double& v : out.values) v /= denom;
  return out;
}

ScoreVector score_from_denoiser(const DenoiserVector& dvec, double t, double lambda, double t_f) {
  const ScoreAffine c = score_affine(t, lambda, t_f);
  ScoreVector out{std::vector<double>(dvec.values.size()), t};
  for (std::size_t l = 0; l < dvec.values.size(); ++l) out.values[l] = c.offset - c.slope * dvec.values[l];
  return out;
}

BackwardRates backward_rates(const std::vector<double>& s, double lambda) {
  BackwardRates r;
  std::vector<double> w(s.size());
  for (std::size_t l = 0; l < s.size(); ++l) {
    double rate = 1.0 - s[l];
    if (!(rate >= -1e-9) || !std::isfinite(rate)) {
      fail(ErrorCode::kInvalidScore, "invalid score: 1 - s = " + std::to_string(rate) + " at coordinate " +
                                         std::to_string(l));
    }
    if (rate < 0.0) rate = 0.0;
    w[l] = lambda * rate;
    r.total += w[l];
  }
  if (r.total > 0.0) {
    for (double& v : w) v /= r.total;
    r.weights = std::move(w);
  }
  return r;
}

BackwardRates backward_rates(const ScoreVector& s, double lambda) { return backward_rates(s.values, lambda); }

}  // namespace dmpm
