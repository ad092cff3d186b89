#include "dmpm/score_source.hpp"

#include <cmath>

#include "dmpm/forward_process.hpp"

namespace dmpm {

namespace {

void check_batch(std::size_t d, std::span<const BitState> xs, std::span<double> out) {
  if (out.size() != xs.size() * d) fail(ErrorCode::kArgument, "score output buffer has wrong size");
  for (const auto& x : xs) {
    if (x.dim() != d) fail(ErrorCode::kDimensionMismatch, "queried state has wrong dimension");
  }
}

double checked_forward_time(double t, double t_f) {
  if (!(t >= 0.0 && t <= t_f)) fail(ErrorCode::kArgument, "backward time " + std::to_string(t) + " outside [0, T_f]");
  return t_f - t;
}

constexpr std::size_t kMaxCachedTimes = 1 << 14;

}  // namespace

void ScoreSource::score(double t, std::span<const BitState> xs, std::span<double> out) const {
  denoiser(t, xs, out);
  const ScoreAffine c = score_affine(t, lambda(), t_f());
  for (double& v : out) v = c.offset - c.slope * v;
}

ScoreVector ScoreSource::score(double t, const BitState& x) const {
  ScoreVector s{std::vector<double>(dim()), t};
  score(t, std::span<const BitState>(&x, 1), s.values);
  return s;
}

DenoiserVector ScoreSource::denoiser(double t, const BitState& x) const {
  DenoiserVector dv{std::vector<double>(dim()), t};
  denoiser(t, std::span<const BitState>(&x, 1), dv.values);
  return dv;
}

// ---------------------------------------------------------------------------

ExactOracle::ExactOracle(Distribution mu0, double lambda, double t_f)
    : mu0_(std::move(mu0)), d_(dmpm::dim(mu0_)), lambda_(lambda), t_f_(t_f) {
  if (!(lambda > 0.0) || !(t_f > 0.0)) fail(ErrorCode::kArgument, "ExactOracle needs lambda > 0 and T_f > 0");
  if (std::holds_alternative<DenseTable>(mu0_)) check_enumerable(d_);
}

std::shared_ptr<const ExactOracle::Tables> ExactOracle::tables(double forward_time, bool need_excluded) const {
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(forward_time);
    if (it != cache_.end() && (!need_excluded || !it->second->excluded.empty())) return it->second;
  }
  const auto& table = std::get<DenseTable>(mu0_);
  auto built = std::make_shared<Tables>();
  built->marginal = table.mass();
  propagate_table(built->marginal, d_, forward_time, lambda_);
  if (need_excluded) {
    const double q = flip_probability(forward_time, lambda_);
    built->excluded.resize(d_);
    for (std::size_t l = 0; l < d_; ++l) {
      auto& ex = built->excluded[l];
      ex = table.mass();
      for (std::size_t axis = 0; axis < d_; ++axis) {
        if (axis == l) continue;
        const std::size_t bit = std::size_t{1} << axis;
        for (std::size_t idx = 0; idx < ex.size(); ++idx) {
          if (idx & bit) continue;
          const double m0 = ex[idx], m1 = ex[idx | bit];
          ex[idx] = (1.0 - q) * m0 + q * m1;
          ex[idx | bit] = q * m0 + (1.0 - q) * m1;
        }
      }
    }
  }
  std::lock_guard lock(mutex_);
  if (cache_.size() >= kMaxCachedTimes) cache_.clear();
  cache_[forward_time] = built;
  return built;
}

void ExactOracle::score(double t, std::span<const BitState> xs, std::span<double> out) const {
  check_batch(d_, xs, out);
  const double tau = checked_forward_time(t, t_f_);
  if (const auto* pb = std::get_if<ProductBernoulli>(&mu0_)) {
    const double a = alpha(tau, lambda_);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t l = 0; l < d_; ++l) {
        const double p1 = 0.5 + (pb->probs()[l] - 0.5) * a;
        const double here = xs[i][l] ? p1 : 1.0 - p1;
        out[i * d_ + l] = 1.0 - (1.0 - here) / here;
      }
    }
    return;
  }
  const auto tabs = tables(tau, false);
  const auto& m = tabs->marginal;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::uint64_t idx = xs[i].to_index();
    const double mx = m[idx];
    if (!(mx > 0.0)) {
      fail(ErrorCode::kUnreachableState,
           "state " + xs[i].to_string() + " has zero forward mass at backward time " + std::to_string(t));
    }
    for (std::size_t l = 0; l < d_; ++l) out[i * d_ + l] = 1.0 - m[idx ^ (std::uint64_t{1} << l)] / mx;
  }
}

void ExactOracle::denoiser(double t, std::span<const BitState> xs, std::span<double> out) const {
  check_batch(d_, xs, out);
  const double tau = checked_forward_time(t, t_f_);
  const double q = flip_probability(tau, lambda_);
  if (const auto* pb = std::get_if<ProductBernoulli>(&mu0_)) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t l = 0; l < d_; ++l) {
        const double p1 = pb->probs()[l];
        const double same = xs[i][l] ? p1 : 1.0 - p1;
        const double joint_other = (1.0 - same) * q;
        out[i * d_ + l] = joint_other / (same * (1.0 - q) + joint_other);
      }
    }
    return;
  }
  const auto tabs = tables(tau, true);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::uint64_t idx = xs[i].to_index();
    const double mx = tabs->marginal[idx];
    if (!(mx > 0.0)) {
      fail(ErrorCode::kUnreachableState,
           "state " + xs[i].to_string() + " has zero forward mass at backward time " + std::to_string(t));
    }
    for (std::size_t l = 0; l < d_; ++l) {
      // P(X0^l != x^l, X_tau = x) = q * (law propagated on the other axes)(phi^l x).
      const double v = q * tabs->excluded[l][idx ^ (std::uint64_t{1} << l)] / mx;
      out[i * d_ + l] = std::min(1.0, std::max(0.0, v));
    }
  }
}

// ---------------------------------------------------------------------------

LearnedSource::LearnedSource(DenoiserNet net, double lambda, double t_f)
    : net_(std::move(net)), lambda_(lambda), t_f_(t_f) {
  net_.check_finite();
}

void LearnedSource::denoiser(double t, std::span<const BitState> xs, std::span<double> out) const {
  check_batch(net_.dim(), xs, out);
  checked_forward_time(t, t_f_);
  if (xs.empty()) return;
  const Eigen::MatrixXd y = net_.predict(t, xs);
  // Column-major d x n is exactly the state-major layout.
  std::copy(y.data(), y.data() + y.size(), out.begin());
}

// ---------------------------------------------------------------------------

void CountingSource::denoiser(double t, std::span<const BitState> xs, std::span<double> out) const {
  {
    std::lock_guard lock(mutex_);
    times_.push_back(t);
  }
  inner_.denoiser(t, xs, out);
}

void CountingSource::score(double t, std::span<const BitState> xs, std::span<double> out) const {
  {
    std::lock_guard lock(mutex_);
    times_.push_back(t);
  }
  inner_.score(t, xs, out);
}

std::vector<double> CountingSource::query_times() const {
  std::lock_guard lock(mutex_);
  return times_;
}

std::size_t CountingSource::query_count() const {
  std::lock_guard lock(mutex_);
  return times_.size();
}

// ---------------------------------------------------------------------------

void ShiftedSource::score(double t, std::span<const BitState> xs, std::span<double> out) const {
  inner_.score(t, xs, out);
  for (double& v : out) v -= shift_;
}

void ShiftedSource::denoiser(double t, std::span<const BitState> xs, std::span<double> out) const {
  // Invert the affine map so that score() and denoiser() stay consistent.
  score(t, xs, out);
  const ScoreAffine c = score_affine(t, lambda(), t_f());
  for (double& v : out) v = (c.offset - v) / c.slope;
}

}  // namespace dmpm
