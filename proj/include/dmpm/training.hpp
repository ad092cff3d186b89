#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dmpm/denoiser_model.hpp"
#include "dmpm/losses.hpp"
#include "dmpm/state_space.hpp"

namespace dmpm {

struct TrainConfig {
  std::uint64_t steps = 2000;
  std::uint64_t batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t decay_every = 0;  // 0 disables step decay
  double decay_gamma = 1.0;
  std::uint64_t epoch_size = 20000;  // generative datasets are redrawn every epoch
  std::uint64_t log_every = 1;       // write one CSV row every log_every steps (and at the last step)

  void validate() const;
};

/// Either a law that can be resampled every epoch or a fixed sample set.
using TrainData = std::variant<Distribution, EmpiricalSet>;

struct TrainLogRow {
  std::uint64_t step = 0;
  LossValues values;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::uint64_t first_step = 1;
  std::uint64_t last_step = 0;
};

inline constexpr double kDivergenceThreshold = 1e6;

/// Algorithm-2 loop: per step draw a batch of clean points, a uniform backward time per item,
/// noise each item forward, evaluate the weighted loss and take one AdamW step.
///
/// `start_step` is the number of steps already taken (resume); numbering continues from it.
/// Throws kTraining if the loss diverges (> 1e6 or non-finite).
TrainResult train(DenoiserNet& net, const TrainData& data, const TrainConfig& config, const LossSpec& spec,
                  double lambda, double t_f, std::uint64_t seed, std::uint64_t start_step = 0,
                  const std::function<void(const TrainLogRow&)>& on_log = {});

inline constexpr const char* kTrainLogHeader = "step,loss_total,loss_l2,loss_e,loss_ce,clamped_frac";

std::string format_log_row(const TrainLogRow& row);
void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows, bool append = false);

}  // namespace dmpm
