#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmpm/analysis.hpp"
#include "dmpm/denoiser_model.hpp"
#include "dmpm/losses.hpp"
#include "dmpm/samplers.hpp"
#include "dmpm/training.hpp"

namespace dmpm {

struct DatasetSpec {
  std::string kind = "sawtooth";  // sawtooth | product | table | table-file | empirical-file
  std::vector<double> probs;      // product
  std::vector<double> masses;     // table (auto-normalized with a warning)
  std::string path;               // table-file (one mass per line) | empirical-file (0/1 lines)
  std::uint64_t n_samples = 20000;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct ValidateSpec {
  std::vector<std::uint64_t> dims{3};
  std::vector<std::uint64_t> steps{25, 100, 400};
  std::uint64_t n_instances = 20;
  double t_f = 4.0;
  std::vector<std::uint64_t> tv_dims{2, 3, 4, 5, 6};
  std::uint64_t tv_instances = 6;
  std::uint64_t tv_points = 20;
  double tv_eta_max = 0.5;

  friend bool operator==(const ValidateSpec&, const ValidateSpec&) = default;
};

/// Everything a run needs. Serialized as JSON with nested sections; unknown keys are errors.
struct RunConfig {
  std::uint64_t d = 8;
  double lambda = 1.0;
  double t_f = 3.0;
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  ModelConfig model;  // model.d mirrors d; model.seed is derived from seed
  std::string loss_preset;  // empty: use loss weights below
  LossSpec loss{1.0, 0.0, 0.0, true};
  TrainConfig train;
  ScheduleKind schedule = ScheduleKind::kCosine;
  std::uint64_t schedule_steps = 30;
  FlipKind flip_kind = FlipKind::kLinear;
  std::uint64_t flip_total = 0;  // 0 means d
  SamplerKind sampler = SamplerKind::kDiscrete;
  std::uint64_t n_samples = 20000;
  double eta = 0.0;  // early stopping: samplers stop at T_f - eta
  std::uint64_t eval_directions = kDefaultSwdDirections;
  std::uint64_t eval_reference = 20000;
  ValidateSpec validate;
  std::string out_dir = "out";

  static RunConfig defaults() { return RunConfig{}; }
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);
  /// Canonical JSON (sorted keys); from_json(to_json()) reproduces the config.
  std::string to_json() const;
  /// Hex FNV-1a hash of the lineage fields: d, lambda, T_f, dataset, model, loss, train.
  std::string lineage_hash() const;
  /// Consistency checks; throws kConfig.
  void check() const;

  LossSpec effective_loss() const;
  std::uint64_t effective_flip_total() const { return flip_total == 0 ? d : flip_total; }
  ModelConfig effective_model() const;
  TimeSchedule time_schedule() const;
  SamplerSpec sampler_spec() const;
};

using LogFn = std::function<void(const std::string& message)>;

struct CommandResult {
  std::vector<std::string> files;     // paths written
  std::vector<std::string> warnings;  // also sent to the log callback
  std::uint64_t violations = 0;       // validate-bounds only
  std::string summary;                // one-line human readable outcome
};

/// Data law of the configured dataset. Empirical files yield their histogram as a table.
struct LoadedDataset {
  std::optional<Distribution> law;         // absent for empirical sets with d > enumeration limit
  std::optional<EmpiricalSet> empirical;   // set for empirical-file datasets
};
LoadedDataset load_dataset(const RunConfig& config, std::vector<std::string>* warnings);

CommandResult cmd_gen_data(const RunConfig& config, const LogFn& log = {});
CommandResult cmd_train(const RunConfig& config, bool resume, bool allow_mismatch = false, const LogFn& log = {});
/// n = 0 uses config.n_samples; empty checkpoint path means <out>/checkpoint.bin.
CommandResult cmd_sample(const RunConfig& config, bool exact_oracle, std::uint64_t n, const std::string& checkpoint,
                         bool allow_mismatch = false, const LogFn& log = {});
/// Empty samples path means <out>/samples.txt.
CommandResult cmd_eval(const RunConfig& config, const std::string& samples, bool allow_mismatch = false,
                       const LogFn& log = {});
CommandResult cmd_validate_bounds(const RunConfig& config, double corrupt_shift = 0.0, const LogFn& log = {});
CommandResult cmd_forward_diag(const RunConfig& config, const LogFn& log = {});

/// One 0/1 string per line.
std::vector<BitState> read_samples(const std::string& path);
void write_samples(const std::string& path, const std::vector<BitState>& xs);

}  // namespace dmpm
