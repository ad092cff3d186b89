#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmpm/losses.hpp"
#include "dmpm/score_oracle.hpp"
#include "dmpm/state_space.hpp"

namespace dmpm {

struct ModelConfig {
  std::uint64_t d = 8;
  std::uint64_t blocks = 2;
  std::uint64_t width = 128;
  std::uint64_t time_embed_dim = 32;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t param_count() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Residual MLP denoiser d_t(x) in (0,1)^d.
///
/// Time enters through sinusoidal features mapped by one SiLU layer; that embedding is
/// added inside every residual block. Each block is LayerNorm -> Linear (+ time) -> SiLU
/// -> Linear with a skip connection. The head is a linear layer followed by a sigmoid.
/// Parameters live in one flat vector so the optimizer and checkpoints see a single array.
class DenoiserNet {
 public:
  explicit DenoiserNet(const ModelConfig& config);
  DenoiserNet(const ModelConfig& config, Eigen::VectorXd params);

  const ModelConfig& config() const { return config_; }
  std::size_t dim() const { return config_.d; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& mutable_params() { return params_; }
  void set_params(Eigen::VectorXd p);

  /// Throws kModelCorrupt if any parameter is NaN or infinite.
  void check_finite() const;

  /// Batched forward pass: column i of the result is d_{times[i]}(states[i]).
  Eigen::MatrixXd predict(std::span<const double> times, std::span<const BitState> states) const;
  /// Same backward time for every state.
  Eigen::MatrixXd predict(double t, std::span<const BitState> states) const;
  DenoiserVector predict(double t, const BitState& x) const;

  /// Loss on a batch and its gradient with respect to the flat parameter vector.
  double loss_and_grad(const TrainBatch& batch, const LossSpec& spec, Eigen::VectorXd& grad,
                       LossValues* values = nullptr) const;

 private:
  struct Cache;
  Eigen::MatrixXd forward(std::span<const double> times, std::span<const BitState> states, Cache* cache) const;
  void backward(const Cache& cache, const Eigen::MatrixXd& dlogits, Eigen::VectorXd& grad) const;
  void init_params();

  ModelConfig config_;
  Eigen::VectorXd params_;
};

/// AdamW with optional step decay of the learning rate.
struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t decay_every = 0;  // 0 disables step decay
  double decay_gamma = 1.0;

  static OptimizerState for_params(std::size_t n, double lr, double weight_decay = 0.0);
  double current_lr() const;
};

/// One decoupled-weight-decay Adam update. Rejects non-finite gradients without touching params.
void optimizer_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, OptimizerState& state);

struct CheckpointMeta {
  double lambda = 1.0;
  double t_f = 3.0;
  std::uint64_t d = 0;
  LossSpec loss;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string run_config;  // serialized run configuration, may be empty
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const DenoiserNet& net, const CheckpointMeta& meta);

struct Checkpoint {
  DenoiserNet net;
  CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::string& path);

/// Throws kConfigMismatch when the checkpoint was trained with a different d, lambda or T_f.
void check_compatible(const CheckpointMeta& meta, std::size_t d, double lambda, double t_f);

}  // namespace dmpm
