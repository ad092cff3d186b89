#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "dmpm/denoiser_model.hpp"
#include "dmpm/score_oracle.hpp"
#include "dmpm/state_space.hpp"

namespace dmpm {

/// Anything the backward samplers can query for scores and denoisers.
///
/// Batched queries write state-major rows: out[i * dim() + l] is coordinate l of state i.
/// Implementations must be safe for concurrent const calls.
class ScoreSource {
 public:
  virtual ~ScoreSource() = default;

  virtual std::size_t dim() const = 0;
  virtual double lambda() const = 0;
  virtual double t_f() const = 0;

  virtual void denoiser(double t, std::span<const BitState> xs, std::span<double> out) const = 0;
  /// Default: the affine denoiser-to-score map with the forward-time guard.
  virtual void score(double t, std::span<const BitState> xs, std::span<double> out) const;

  ScoreVector score(double t, const BitState& x) const;
  DenoiserVector denoiser(double t, const BitState& x) const;
};

/// Exact score and denoiser of an enumerable (or product) data law.
class ExactOracle final : public ScoreSource {
 public:
  using ScoreSource::denoiser;
  using ScoreSource::score;
  ExactOracle(Distribution mu0, double lambda, double t_f);

  std::size_t dim() const override { return d_; }
  double lambda() const override { return lambda_; }
  double t_f() const override { return t_f_; }
  const Distribution& data() const { return mu0_; }

  void denoiser(double t, std::span<const BitState> xs, std::span<double> out) const override;
  /// Mass-ratio score; no forward-time clamp.
  void score(double t, std::span<const BitState> xs, std::span<double> out) const override;

 private:
  struct Tables {
    std::vector<double> marginal;
    // excluded[l]: data law propagated along every axis except l (built on first denoiser query).
    std::vector<std::vector<double>> excluded;
  };
  std::shared_ptr<const Tables> tables(double forward_time, bool need_excluded) const;

  Distribution mu0_;
  std::size_t d_;
  double lambda_;
  double t_f_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<double, std::shared_ptr<const Tables>> cache_;
};

/// Scores from a trained network through the denoiser reparameterization.
class LearnedSource final : public ScoreSource {
 public:
  using ScoreSource::denoiser;
  using ScoreSource::score;
  /// Holds its own copy of the network.
  LearnedSource(DenoiserNet net, double lambda, double t_f);

  std::size_t dim() const override { return net_.dim(); }
  double lambda() const override { return lambda_; }
  double t_f() const override { return t_f_; }
  const DenoiserNet& net() const { return net_; }

  void denoiser(double t, std::span<const BitState> xs, std::span<double> out) const override;

 private:
  DenoiserNet net_;
  double lambda_;
  double t_f_;
};

/// Records every backward time at which the wrapped source is queried.
class CountingSource final : public ScoreSource {
 public:
  using ScoreSource::denoiser;
  using ScoreSource::score;
  explicit CountingSource(const ScoreSource& inner) : inner_(inner) {}

  std::size_t dim() const override { return inner_.dim(); }
  double lambda() const override { return inner_.lambda(); }
  double t_f() const override { return inner_.t_f(); }
  void denoiser(double t, std::span<const BitState> xs, std::span<double> out) const override;
  void score(double t, std::span<const BitState> xs, std::span<double> out) const override;

  std::vector<double> query_times() const;
  std::size_t query_count() const;

 private:
  const ScoreSource& inner_;
  mutable std::mutex mutex_;
  mutable std::vector<double> times_;
};

/// Fault injection: raises every backward rate factor, 1 - s' = 1 - s + shift.
class ShiftedSource final : public ScoreSource {
 public:
  using ScoreSource::denoiser;
  using ScoreSource::score;
  ShiftedSource(const ScoreSource& inner, double shift) : inner_(inner), shift_(shift) {}

  std::size_t dim() const override { return inner_.dim(); }
  double lambda() const override { return inner_.lambda(); }
  double t_f() const override { return inner_.t_f(); }
  void denoiser(double t, std::span<const BitState> xs, std::span<double> out) const override;
  void score(double t, std::span<const BitState> xs, std::span<double> out) const override;

 private:
  const ScoreSource& inner_;
  double shift_;
};

}  // namespace dmpm
