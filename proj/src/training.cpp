#include "dmpm/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace dmpm {

void TrainConfig::validate() const {
  if (batch_size == 0) fail(ErrorCode::kConfig, "train.batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorCode::kConfig, "train.lr must be positive");
  if (!(weight_decay >= 0.0)) fail(ErrorCode::kConfig, "train.weight_decay must be >= 0");
  if (!(decay_gamma > 0.0 && decay_gamma <= 1.0)) fail(ErrorCode::kConfig, "train.decay_gamma must be in (0, 1]");
  if (epoch_size == 0) fail(ErrorCode::kConfig, "train.epoch_size must be >= 1");
  if (log_every == 0) fail(ErrorCode::kConfig, "train.log_every must be >= 1");
}

namespace {

/// Serves clean points batch by batch; reshuffles (empirical) or redraws (generative) per epoch.
class BatchFeeder {
 public:
  BatchFeeder(const TrainData& data, std::uint64_t epoch_size, Rng& rng) : data_(data), rng_(rng) {
    if (const auto* emp = std::get_if<EmpiricalSet>(&data_)) {
      pool_ = emp->samples();
    } else {
      epoch_size_ = epoch_size;
    }
    refill();
  }

  std::vector<BitState> next(std::size_t n) {
    std::vector<BitState> out;
    out.reserve(n);
    while (out.size() < n) {
      if (cursor_ == pool_.size()) refill();
      out.push_back(pool_[cursor_++]);
    }
    return out;
  }

 private:
  void refill() {
    if (const auto* dist = std::get_if<Distribution>(&data_)) {
      pool_ = sample(*dist, epoch_size_, rng_).samples();
    } else {
      std::shuffle(pool_.begin(), pool_.end(), rng_.engine());
    }
    cursor_ = 0;
  }

  const TrainData& data_;
  Rng& rng_;
  std::vector<BitState> pool_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_size_ = 0;
};

std::size_t data_dim(const TrainData& data) {
  if (const auto* dist = std::get_if<Distribution>(&data)) return dim(*dist);
  return std::get<EmpiricalSet>(data).dim();
}

}  // namespace

TrainResult train(DenoiserNet& net, const TrainData& data, const TrainConfig& config, const LossSpec& spec,
                  double lambda, double t_f, std::uint64_t seed, std::uint64_t start_step,
                  const std::function<void(const TrainLogRow&)>& on_log) {
  config.validate();
  spec.validate();
  if (!(lambda > 0.0) || !(t_f > 0.0)) fail(ErrorCode::kConfig, "training needs lambda > 0 and T_f > 0");
  if (data_dim(data) != net.dim()) fail(ErrorCode::kDimensionMismatch, "dataset d does not match model d");
  net.check_finite();

  // Resumed runs continue on a fresh stream so steps are not a replay of the first segment.
  Rng rng(derive_seed(seed, "train", start_step));
  BatchFeeder feeder(data, config.epoch_size, rng);

  // Moments restart on resume (bias correction counts local steps); the learning-rate decay
  // follows the global step number so a resumed run keeps the schedule.
  OptimizerState opt = OptimizerState::for_params(static_cast<std::size_t>(net.params().size()), config.lr,
                                                  config.weight_decay);

  TrainResult result;
  result.first_step = start_step + 1;
  result.last_step = start_step;
  Eigen::VectorXd grad;
  for (std::uint64_t k = 1; k <= config.steps; ++k) {
    const std::uint64_t step = start_step + k;
    const std::vector<BitState> clean = feeder.next(config.batch_size);
    const TrainBatch batch = make_batch(clean, lambda, t_f, rng);
    LossValues values;
    net.loss_and_grad(batch, spec, grad, &values);
    if (!std::isfinite(values.total) || values.total > kDivergenceThreshold) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "training diverged at step %llu: loss %.6g (l2 %.6g, e %.6g, ce %.6g)",
                    static_cast<unsigned long long>(step), values.total, values.l2, values.entropy, values.ce);
      fail(ErrorCode::kTraining, buf);
    }
    opt.lr = config.lr;
    if (config.decay_every > 0) {
      opt.lr *= std::pow(config.decay_gamma, static_cast<double>((step - 1) / config.decay_every));
    }
    optimizer_step(net.mutable_params(), grad, opt);
    result.last_step = step;
    if (k % config.log_every == 0 || k == config.steps) {
      TrainLogRow row{step, values};
      result.log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  net.check_finite();
  return result;
}

std::string format_log_row(const TrainLogRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.10g,%.10g,%.10g,%.10g,%.6g", static_cast<unsigned long long>(row.step),
                row.values.total, row.values.l2, row.values.entropy, row.values.ce, row.values.clamped_frac);
  return buf;
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open training log '" + path + "' for writing");
  if (!append) out << kTrainLogHeader << '\n';
  for (const auto& r : rows) out << format_log_row(r) << '\n';
  if (!out) fail(ErrorCode::kIo, "failed writing training log '" + path + "'");
}

}  // namespace dmpm
