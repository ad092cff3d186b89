#include "dmpm/forward_process.hpp"

#include <algorithm>
#include <cmath>

namespace dmpm {

namespace {

void check_time(double t) {
  if (!(t >= 0.0) || std::isnan(t)) fail(ErrorCode::kArgument, "time must be >= 0, got " + std::to_string(t));
}

}  // namespace

void ForwardParams::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) fail(ErrorCode::kArgument, "lambda must be > 0");
  if (!(t_f > 0.0) || !std::isfinite(t_f)) fail(ErrorCode::kArgument, "T_f must be > 0");
}

double alpha(double t, double lambda) {
  check_time(t);
  return std::exp(-2.0 * lambda * t);
}

double flip_probability(double t, double lambda) {
  check_time(t);
  // -expm1 keeps precision for small t.
  return -0.5 * std::expm1(-2.0 * lambda * t);
}

double kernel1(int a, int b, double t, double lambda) {
  require((a == 0 || a == 1) && (b == 0 || b == 1), "kernel1: bits must be 0 or 1");
  const double q = flip_probability(t, lambda);
  return a == b ? 1.0 - q : q;
}

double kernel(const BitState& x, const BitState& y, double t, double lambda) {
  if (x.dim() != y.dim()) fail(ErrorCode::kDimensionMismatch, "kernel: dimension mismatch");
  const double q = flip_probability(t, lambda);
  double p = 1.0;
  for (std::size_t i = 0; i < x.dim(); ++i) p *= x[i] == y[i] ? 1.0 - q : q;
  return p;
}

ProductBernoulli marginal_product(const ProductBernoulli& mu0, double t, double lambda) {
  const double a = alpha(t, lambda);
  std::vector<double> p = mu0.probs();
  for (double& pi : p) pi = 0.5 + (pi - 0.5) * a;
  return ProductBernoulli(std::move(p));
}

void propagate_table(std::vector<double>& mass, std::size_t d, double t, double lambda) {
  const double q = flip_probability(t, lambda);
  const double stay = 1.0 - q;
  for (std::size_t axis = 0; axis < d; ++axis) {
    const std::size_t bit = std::size_t{1} << axis;
    for (std::size_t idx = 0; idx < mass.size(); ++idx) {
      if (idx & bit) continue;
      const double m0 = mass[idx];
      const double m1 = mass[idx | bit];
      mass[idx] = stay * m0 + q * m1;
      mass[idx | bit] = q * m0 + stay * m1;
    }
  }
}

DenseTable marginal(const Distribution& mu0, double t, double lambda) {
  check_time(t);
  if (const auto* pb = std::get_if<ProductBernoulli>(&mu0)) {
    check_enumerable(pb->dim());
    return to_table(marginal_product(*pb, t, lambda));
  }
  const auto& table = std::get<DenseTable>(mu0);
  std::vector<double> mass = table.mass();
  propagate_table(mass, table.dim(), t, lambda);
  return DenseTable::normalized(table.dim(), std::move(mass));
}

BitState sample_conditional(const BitState& x0, double t, double lambda, Rng& rng) {
  check_time(t);
  const double q = flip_probability(t, lambda);
  BitState x = x0;
  if (q == 0.0) return x;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    if (rng.bernoulli(q)) x.toggle(i);
  }
  return x;
}

ForwardPath simulate_path(const BitState& x0, const ForwardParams& params, Rng& rng) {
  require(params.lambda > 0.0 && params.t_f >= 0.0, "simulate_path: need lambda > 0 and T_f >= 0");
  ForwardPath path;
  path.x0 = x0;
  const std::size_t d = x0.dim();
  const std::uint64_t n = rng.poisson(params.lambda * static_cast<double>(d) * params.t_f);
  path.jump_times.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) path.jump_times.push_back(params.t_f * (1.0 - rng.uniform()));
  std::sort(path.jump_times.begin(), path.jump_times.end());
  // Ties have probability zero in exact arithmetic; drop any produced by rounding.
  path.jump_times.erase(std::unique(path.jump_times.begin(), path.jump_times.end()), path.jump_times.end());
  path.jump_coords.reserve(path.jump_times.size());
  for (std::size_t i = 0; i < path.jump_times.size(); ++i) path.jump_coords.push_back(rng.index(d));
  return path;
}

BitState ForwardPath::state_at(double t) const {
  BitState x = x0;
  for (std::size_t i = 0; i < jump_times.size() && jump_times[i] <= t; ++i) x.toggle(jump_coords[i]);
  return x;
}

BitState ForwardPath::terminal() const {
  BitState x = x0;
  for (auto c : jump_coords) x.toggle(c);
  return x;
}

}  // namespace dmpm
