#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmpm/harness.hpp"

using namespace dmpm;
namespace fs = std::filesystem;

namespace {
ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{0};
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config(const std::string& dir) {
  RunConfig c;
  c.d = 4;
  c.out_dir = dir;
  c.model.blocks = 1;
  c.model.width = 16;
  c.model.time_embed_dim = 8;
  c.train.steps = 20;
  c.train.batch_size = 32;
  c.n_samples = 2000;
  c.eval_reference = 2000;
  c.eval_directions = 100;
  c.schedule_steps = 20;
  fs::remove_all(dir);
  return c;
}
}  // namespace

TEST_CASE("config JSON round trip and strictness") {
  RunConfig c;
  c.d = 5;
  c.seed = 17;
  c.loss_preset = "l2+ce-w";
  c.sampler = SamplerKind::kFlip;
  c.schedule = ScheduleKind::kQuadratic;
  c.dataset.kind = "product";
  c.dataset.probs = {0.1, 0.2, 0.3, 0.4, 0.5};
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.seed == 17);
  CHECK(back.sampler == SamplerKind::kFlip);
  CHECK(code_of([] { RunConfig::from_json(R"({"d": 4, "typo": 1})"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { RunConfig::from_json(R"({"train": {"stepz": 4}})"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { RunConfig::from_json("{not json"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { RunConfig::from_json(R"({"d": 4, "dataset": {"kind": "product", "probs": [0.5]}})").check(); }) ==
        ErrorCode::kConfig);
  CHECK(code_of([] { RunConfig::load("no-such-config.json"); }) == ErrorCode::kIo);
}

TEST_CASE("lineage hash covers training lineage but not the seed or sampler") {
  RunConfig a;
  RunConfig b = a;
  b.seed = 99;
  b.sampler = SamplerKind::kDenoise;
  b.out_dir = "elsewhere";
  CHECK(a.lineage_hash() == b.lineage_hash());
  CHECK(a.lineage_hash().size() == 16);
  RunConfig c = a;
  c.t_f = 4.0;
  CHECK(c.lineage_hash() != a.lineage_hash());
  RunConfig d = a;
  d.train.lr = 2e-3;
  CHECK(d.lineage_hash() != a.lineage_hash());
}

TEST_CASE("gen-data, forward-diag and the exact-oracle sample/eval pipeline") {
  const std::string dir = "harness_pipeline";
  RunConfig c = small_config(dir);
  cmd_gen_data(c);
  CHECK(read_samples(dir + "/data_samples.txt").size() == c.dataset.n_samples);
  CHECK(read_json(dir + "/dataset.json")["d"] == 4);

  cmd_forward_diag(c);
  const std::string diag = read_text(dir + "/forward_diag.csv");
  CHECK(diag.rfind("t,alpha,flip_prob,k00,k01,k10,k11\n", 0) == 0);
  CHECK(fs::exists(dir + "/forward_marginal.csv"));

  cmd_sample(c, true, 0, "");
  const auto xs = read_samples(dir + "/samples.txt");
  CHECK(xs.size() == 2000);
  const auto side = read_json(dir + "/samples.json");
  CHECK(side["config_hash"] == c.lineage_hash());
  CHECK(side["source"] == "exact-oracle");

  const CommandResult ev = cmd_eval(c, "");
  const auto m = read_json(dir + "/metrics.json");
  CHECK(m["swd"]["value"].get<double>() < 0.05);
  CHECK(m.contains("tv"));
  CHECK(read_text(dir + "/metrics.csv").rfind("metric,value\n", 0) == 0);

  RunConfig other = c;
  other.t_f = 4.0;
  CHECK(code_of([&] { cmd_eval(other, ""); }) == ErrorCode::kConfigMismatch);
  CHECK(code_of([&] { cmd_eval(other, "", true); }) == ErrorCode{0});
}

TEST_CASE("flip sampler sidecar records the flip schedule") {
  RunConfig c = small_config("harness_flip");
  c.sampler = SamplerKind::kFlip;
  c.flip_total = 12;
  cmd_sample(c, true, 100, "");
  const auto side = read_json("harness_flip/samples.json");
  std::uint64_t total = 0;
  for (const auto& v : side["flips"]["counts"]) total += v.get<std::uint64_t>();
  CHECK(total == 12);
}

TEST_CASE("train, resume and sample from a checkpoint") {
  const std::string dir = "harness_train";
  RunConfig c = small_config(dir);
  cmd_train(c, false);
  CHECK(fs::exists(dir + "/checkpoint.bin"));
  cmd_train(c, true);
  const auto side = read_json(dir + "/train.json");
  CHECK(side["first_step"] == 21);
  CHECK(side["last_step"] == 40);
  std::ifstream log(dir + "/train_log.csv");
  std::string line;
  int rows = 0;
  std::getline(log, line);
  CHECK(line == kTrainLogHeader);
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 40);

  cmd_sample(c, false, 50, "");
  CHECK(read_samples(dir + "/samples.txt").size() == 50);

  RunConfig changed = c;
  changed.train.lr = 5e-2;
  CHECK(code_of([&] { cmd_train(changed, true); }) == ErrorCode::kConfigMismatch);
  CHECK(code_of([&] { cmd_sample(changed, false, 10, ""); }) == ErrorCode::kConfigMismatch);
  CHECK(code_of([&] { cmd_sample(changed, false, 10, "", true); }) == ErrorCode{0});
  RunConfig other_d = c;
  other_d.d = 5;
  CHECK(code_of([&] { cmd_sample(other_d, false, 10, "", true); }) == ErrorCode::kConfigMismatch);
}

TEST_CASE("validate-bounds writes reports and detects nothing on the exact score") {
  RunConfig c = small_config("harness_bounds");
  c.validate.dims = {2, 3};
  c.validate.steps = {25, 100};
  c.validate.n_instances = 3;
  c.validate.tv_dims = {2, 3};
  c.validate.tv_instances = 2;
  const CommandResult r = cmd_validate_bounds(c);
  CHECK(r.violations == 0);
  CHECK(read_text("harness_bounds/bounds.csv")
            .rfind("instance,d,K,kl_init,beta,tau,eps,t_f,kl_measured,bound,bound_eps0,slack,violated\n", 0) == 0);
  CHECK(fs::exists("harness_bounds/tv_bounds.csv"));

  const CommandResult bad = cmd_validate_bounds(c, 1.0);
  CHECK(bad.violations == 0);  // eps > 0 enters the bound
  CHECK(read_json("harness_bounds/bounds.json")["eps_max"].get<double>() > 0.0);

  c.validate.dims = {12};
  CHECK(code_of([&] { cmd_validate_bounds(c); }) == ErrorCode::kEnumerationLimit);
}

TEST_CASE("datasets from files") {
  fs::create_directories("harness_files");
  {
    std::ofstream t("harness_files/table.txt");
    t << "1 1 1 5\n";
    std::ofstream e("harness_files/emp.txt");
    e << "01\n11\n11\n10\n";
  }
  RunConfig c = small_config("harness_files_out");
  c.d = 2;
  c.dataset.kind = "table-file";
  c.dataset.path = "harness_files/table.txt";
  std::vector<std::string> warnings;
  const LoadedDataset t = load_dataset(c, &warnings);
  CHECK(prob(*t.law, BitState::from_string("11")) == doctest::Approx(0.625));
  CHECK_FALSE(warnings.empty());  // masses were normalized

  c.dataset.kind = "empirical-file";
  c.dataset.path = "harness_files/emp.txt";
  const LoadedDataset e = load_dataset(c, nullptr);
  CHECK(e.empirical->size() == 4);
  CHECK(prob(*e.law, BitState::from_string("11")) == doctest::Approx(0.5));

  {
    std::ofstream bad("harness_files/bad.txt");
    bad << "011\n";
  }
  c.dataset.path = "harness_files/bad.txt";
  CHECK(code_of([&] { load_dataset(c, nullptr); }) == ErrorCode::kDimensionMismatch);
  {
    std::ofstream empty("harness_files/empty.txt");
  }
  CHECK(code_of([] { read_samples("harness_files/empty.txt"); }) == ErrorCode::kIo);
}
