// dmpm-cli: command-line front end over the dmpm C API.
//
// Exit codes: 0 success, 20 validate-bounds found violated inequalities, otherwise the
// dmpm_status value of the failure (see dmpm.h); 64 for usage errors.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dmpm/dmpm.h"

namespace {

constexpr int kExitViolations = 20;
constexpr int kExitUsage = 64;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string sampler;
  std::optional<std::uint64_t> steps;
  std::string schedule;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool sampling) {
  cmd->add_option("--config", o.config_path, "JSON run configuration (defaults used when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
  cmd->add_option("--out", o.out_dir, "output directory (overrides the config)");
  if (sampling) {
    cmd->add_option("--sampler", o.sampler, "sampler kind")
        ->check(CLI::IsMember({"continuous", "percoord", "discrete", "flip", "denoise"}));
    cmd->add_option("--steps", o.steps, "number of time steps K")->check(CLI::PositiveNumber);
    cmd->add_option("--schedule", o.schedule, "time schedule")->check(CLI::IsMember({"linear", "quadratic", "cosine"}));
  }
}

void log_to_stderr(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

int report(dmpm_status st) {
  if (st == DMPM_OK) return 0;
  std::fprintf(stderr, "error (%s): %s\n", dmpm_status_string(st), dmpm_last_error());
  return static_cast<int>(st);
}

/// Builds the configuration handle from the common options; returns nullptr after reporting.
dmpm_config* make_config(const CommonOptions& o, int& exit_code) {
  dmpm_config* cfg = nullptr;
  dmpm_status st = o.config_path.empty() ? dmpm_config_default(&cfg) : dmpm_config_load(o.config_path.c_str(), &cfg);
  if (st == DMPM_OK && o.seed) st = dmpm_config_set_seed(cfg, *o.seed);
  if (st == DMPM_OK && !o.out_dir.empty()) st = dmpm_config_set_out_dir(cfg, o.out_dir.c_str());
  if (st == DMPM_OK && !o.sampler.empty()) st = dmpm_config_set_sampler(cfg, o.sampler.c_str());
  if (st == DMPM_OK && o.steps) st = dmpm_config_set_steps(cfg, *o.steps);
  if (st == DMPM_OK && !o.schedule.empty()) st = dmpm_config_set_schedule(cfg, o.schedule.c_str());
  if (st != DMPM_OK) {
    exit_code = report(st);
    dmpm_config_free(cfg);
    return nullptr;
  }
  return cfg;
}

std::string out_dir_of(const dmpm_config* cfg) {
  size_t needed = 0;
  if (dmpm_config_to_json(cfg, nullptr, 0, &needed) != DMPM_OK) return "out";
  std::string text(needed, '\0');
  dmpm_config_to_json(cfg, text.data(), text.size(), &needed);
  const auto key = text.find("\"out_dir\"");
  if (key == std::string::npos) return "out";
  const auto open = text.find('"', text.find(':', key) + 1);
  const auto close = text.find('"', open + 1);
  return text.substr(open + 1, close - open - 1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete Markov probabilistic models on {0,1}^d: data, training, sampling, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags such as --quiet may follow the subcommand
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  CommonOptions gen_o, train_o, sample_o, eval_o, val_o, diag_o;
  bool resume = false, exact = false, allow_mismatch_train = false, allow_mismatch_sample = false,
       allow_mismatch_eval = false, print_config = false;
  std::uint64_t n = 0;
  std::string checkpoint, samples;
  double corrupt = 0.0;

  auto* gen = app.add_subcommand("gen-data", "write the dataset description and a sample file");
  add_common(gen, gen_o, false);
  gen->add_flag("--print-config", print_config, "print the effective configuration as JSON and exit");

  auto* tr = app.add_subcommand("train", "train the denoiser network (Algorithm 2)");
  add_common(tr, train_o, false);
  tr->add_flag("--resume", resume, "continue from <out>/checkpoint.bin");
  tr->add_flag("--allow-mismatch", allow_mismatch_train, "resume even if the config lineage differs");

  auto* smp = app.add_subcommand("sample", "generate samples with a backward sampler");
  add_common(smp, sample_o, true);
  smp->add_flag("--exact-oracle", exact, "use the exact score of the dataset law instead of a checkpoint");
  smp->add_option("-n,--n", n, "number of samples (default: config sampler.n)");
  smp->add_option("--checkpoint", checkpoint, "checkpoint path (default: <out>/checkpoint.bin)");
  smp->add_flag("--allow-mismatch", allow_mismatch_sample, "accept a checkpoint from a different config lineage");

  auto* ev = app.add_subcommand("eval", "SWD and exact KL/TV of a sample file against the dataset");
  add_common(ev, eval_o, false);
  ev->add_option("--samples", samples, "sample file (default: <out>/samples.txt)");
  ev->add_flag("--allow-mismatch", allow_mismatch_eval, "evaluate samples from a different config lineage");

  auto* val = app.add_subcommand("validate-bounds", "numerically check the convergence and early-stopping bounds");
  add_common(val, val_o, false);
  val->add_option("--corrupt-score", corrupt, "fault injection: raise every 1 - s by this shift")
      ->check(CLI::NonNegativeNumber);

  auto* diag = app.add_subcommand("forward-diag", "print forward kernel and marginal tables");
  add_common(diag, diag_o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (!quiet) dmpm_set_log_callback(log_to_stderr, nullptr);
  int exit_code = 0;

  if (*gen) {
    dmpm_config* cfg = make_config(gen_o, exit_code);
    if (!cfg) return exit_code;
    if (print_config) {
      size_t needed = 0;
      dmpm_config_to_json(cfg, nullptr, 0, &needed);
      std::string text(needed, '\0');
      dmpm_config_to_json(cfg, text.data(), text.size(), &needed);
      std::printf("%s\n", text.c_str());
    } else {
      exit_code = report(dmpm_cmd_gen_data(cfg));
    }
    dmpm_config_free(cfg);
  } else if (*tr) {
    dmpm_config* cfg = make_config(train_o, exit_code);
    if (!cfg) return exit_code;
    exit_code = report(dmpm_cmd_train(cfg, resume, allow_mismatch_train));
    dmpm_config_free(cfg);
  } else if (*smp) {
    dmpm_config* cfg = make_config(sample_o, exit_code);
    if (!cfg) return exit_code;
    exit_code = report(dmpm_cmd_sample(cfg, exact, n, checkpoint.empty() ? nullptr : checkpoint.c_str(),
                                       allow_mismatch_sample));
    dmpm_config_free(cfg);
  } else if (*ev) {
    dmpm_config* cfg = make_config(eval_o, exit_code);
    if (!cfg) return exit_code;
    exit_code = report(dmpm_cmd_eval(cfg, samples.empty() ? nullptr : samples.c_str(), allow_mismatch_eval));
    if (exit_code == 0) {
      std::ifstream in(out_dir_of(cfg) + "/metrics.csv");
      std::cout << in.rdbuf();
    }
    dmpm_config_free(cfg);
  } else if (*val) {
    dmpm_config* cfg = make_config(val_o, exit_code);
    if (!cfg) return exit_code;
    std::uint64_t violations = 0;
    exit_code = report(dmpm_cmd_validate_bounds(cfg, corrupt, &violations));
    if (exit_code == 0) {
      std::printf("violations: %llu\n", static_cast<unsigned long long>(violations));
      if (violations > 0) exit_code = kExitViolations;
    }
    dmpm_config_free(cfg);
  } else if (*diag) {
    dmpm_config* cfg = make_config(diag_o, exit_code);
    if (!cfg) return exit_code;
    exit_code = report(dmpm_cmd_forward_diag(cfg));
    if (exit_code == 0) {
      std::ifstream in(out_dir_of(cfg) + "/forward_diag.csv");
      std::cout << in.rdbuf();
    }
    dmpm_config_free(cfg);
  }
  return exit_code;
}
