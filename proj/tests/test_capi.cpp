// Exercises the shared library through its C interface only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dmpm/dmpm.h"

TEST_CASE("status strings and error reporting") {
  CHECK(std::string(dmpm_status_string(DMPM_OK)) == "ok");
  CHECK(std::string(dmpm_status_string(DMPM_ERR_CONFIG)) == "config error");
  dmpm_config* cfg = nullptr;
  CHECK(dmpm_config_parse("{\"bogus\": 1}", &cfg) == DMPM_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::strlen(dmpm_last_error()) > 0);
  CHECK(dmpm_config_load("missing.json", &cfg) == DMPM_ERR_IO);
  CHECK(dmpm_version()[0] != '\0');
}

TEST_CASE("config handle setters, JSON and hash") {
  dmpm_config* cfg = nullptr;
  REQUIRE(dmpm_config_parse("{\"d\": 3}", &cfg) == DMPM_OK);
  CHECK(dmpm_config_set_seed(cfg, 4) == DMPM_OK);
  CHECK(dmpm_config_set_sampler(cfg, "denoise") == DMPM_OK);
  CHECK(dmpm_config_set_schedule(cfg, "linear") == DMPM_OK);
  CHECK(dmpm_config_set_steps(cfg, 0) == DMPM_ERR_CONFIG);
  CHECK(dmpm_config_set_sampler(cfg, "nope") != DMPM_OK);
  size_t needed = 0;
  CHECK(dmpm_config_to_json(cfg, nullptr, 0, &needed) == DMPM_OK);
  std::string text(needed, '\0');
  CHECK(dmpm_config_to_json(cfg, text.data(), text.size(), &needed) == DMPM_OK);
  CHECK(text.find("\"denoise\"") != std::string::npos);
  char small[4];
  CHECK(dmpm_config_to_json(cfg, small, sizeof small, &needed) == DMPM_ERR_ARGUMENT);
  char hash[17];
  CHECK(dmpm_config_hash(cfg, hash, sizeof hash) == DMPM_OK);
  CHECK(std::strlen(hash) == 16);
  dmpm_config_free(cfg);
  dmpm_config_free(nullptr);
}

TEST_CASE("numerics") {
  double a = 0.0;
  CHECK(dmpm_alpha(0.5 * std::log(2.0), 1.0, &a) == DMPM_OK);
  CHECK(a == doctest::Approx(0.5));
  CHECK(dmpm_alpha(-1.0, 1.0, &a) == DMPM_ERR_ARGUMENT);
  double grid[5];
  CHECK(dmpm_time_grid("linear", 4, 2.0, grid, 5) == DMPM_OK);
  CHECK(grid[2] == doctest::Approx(1.0));
  const uint8_t zeros[] = {0, 0, 0, 0, 0, 0};
  const uint8_t ones[] = {1, 1, 1, 1, 1, 1};
  double v = 0.0, se = 0.0;
  CHECK(dmpm_swd(zeros, 2, ones, 2, 3, 50, 1, &v, &se) == DMPM_OK);
  CHECK(v == doctest::Approx(1.0));
  const uint8_t bad[] = {0, 2, 0};
  CHECK(dmpm_swd(bad, 1, ones, 2, 3, 50, 1, &v, &se) == DMPM_ERR_ARGUMENT);
}

namespace {
std::vector<std::string> g_lines;
void collect(const char* msg, void*) { g_lines.emplace_back(msg); }
}  // namespace

TEST_CASE("commands, logging and model handles") {
  const std::string dir = "capi_run";
  std::filesystem::remove_all(dir);
  dmpm_config* cfg = nullptr;
  REQUIRE(dmpm_config_parse(R"({"d": 3, "model": {"blocks": 1, "width": 8, "time_embed_dim": 4},
                                "train": {"steps": 5, "batch_size": 16},
                                "sampler": {"n": 100}, "eval": {"n_directions": 20, "n_reference": 500}})",
                            &cfg) == DMPM_OK);
  CHECK(dmpm_config_set_out_dir(cfg, dir.c_str()) == DMPM_OK);
  dmpm_set_log_callback(collect, nullptr);
  CHECK(dmpm_cmd_gen_data(cfg) == DMPM_OK);
  CHECK(dmpm_cmd_train(cfg, 0, 0) == DMPM_OK);
  CHECK(dmpm_cmd_sample(cfg, 0, 0, nullptr, 0) == DMPM_OK);
  CHECK(dmpm_cmd_eval(cfg, nullptr, 0) == DMPM_OK);
  CHECK(dmpm_cmd_forward_diag(cfg) == DMPM_OK);
  dmpm_set_log_callback(nullptr, nullptr);
  CHECK_FALSE(g_lines.empty());
  CHECK(std::filesystem::exists(dir + "/metrics.json"));
  CHECK(dmpm_cmd_eval(cfg, "missing-samples.txt", 0) == DMPM_ERR_IO);

  dmpm_model* model = nullptr;
  REQUIRE(dmpm_model_load((dir + "/checkpoint.bin").c_str(), &model) == DMPM_OK);
  size_t d = 0;
  CHECK(dmpm_model_dim(model, &d) == DMPM_OK);
  CHECK(d == 3);
  const uint8_t states[] = {0, 1, 1, 1, 0, 0};
  double out[6];
  CHECK(dmpm_model_predict(model, 1.0, states, 2, out) == DMPM_OK);
  for (double v : out) CHECK((v > 0.0 && v < 1.0));
  CHECK(dmpm_model_predict(model, 9.0, states, 2, out) == DMPM_ERR_ARGUMENT);
  dmpm_model_free(model);
  CHECK(dmpm_model_load("missing.bin", &model) == DMPM_ERR_IO);
  dmpm_config_free(cfg);
}
