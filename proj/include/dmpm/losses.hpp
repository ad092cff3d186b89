#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmpm/state_space.hpp"

namespace dmpm {

/// Weights on the L2-denoiser, entropy and cross-entropy losses.
struct LossSpec {
  double w1 = 1.0;
  double w2 = 0.0;
  double w3 = 0.0;
  bool w_scaled = false;  // divide the L2 and CE integrands by w_t

  void validate() const;
  /// Weights rescaled onto the 2-simplex.
  LossSpec normalized() const;

  /// Named presets: "l2", "ce", "l2+e", "l2+ce", "e+ce", "l2+e+ce", each with a "-w" suffix
  /// for the scaled family. Weights are simplex-normalized.
  static LossSpec preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

struct TrainItem {
  BitState x0;
  double t = 0.0;  // backward time
  BitState xt;     // noised state at forward time T_f - t
};

struct TrainBatch {
  std::vector<TrainItem> items;
  double lambda = 1.0;
  double t_f = 3.0;

  std::size_t dim() const { return items.front().x0.dim(); }
  void validate() const;
};

/// Draws t ~ Unif[0, T_f] per item and noises each clean state with sample_conditional.
TrainBatch make_batch(std::span<const BitState> clean, double lambda, double t_f, Rng& rng);

struct LossValues {
  double total = 0.0;
  double l2 = 0.0;
  double entropy = 0.0;
  double ce = 0.0;
  double clamped_frac = 0.0;  // items whose forward time hit the guard
  std::size_t ce_clipped = 0;  // predictions clipped to [1e-12, 1 - 1e-12]
};

/// w_t = (1 - alpha_{T_f - t})/2 with the forward-time guard.
double w_scale(double t, double lambda, double t_f);

/// Evaluates all three losses on a prediction matrix (d x B, column i = item i).
/// Every component is a mean over items and coordinates. When grad is non-null it
/// receives d(total)/d(pred) for the weights in spec.
LossValues evaluate_losses(const TrainBatch& batch, const Eigen::MatrixXd& pred, const LossSpec& spec,
                           Eigen::MatrixXd* grad = nullptr);

/// Denoiser callback: writes d_t(x) into out (length d).
using DenoiserFn = std::function<void(double t, const BitState& x, std::span<double> out)>;

Eigen::MatrixXd predict_batch(const TrainBatch& batch, const DenoiserFn& model);

double loss_l2(const TrainBatch& batch, const DenoiserFn& model, bool w_scaled = false);
double loss_ce(const TrainBatch& batch, const DenoiserFn& model, bool w_scaled = false);
double loss_entropy(const TrainBatch& batch, const DenoiserFn& model);
double combined_loss(const TrainBatch& batch, const DenoiserFn& model, const LossSpec& spec);

}  // namespace dmpm
