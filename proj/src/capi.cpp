#include "dmpm/dmpm.h"

#include <cstring>
#include <mutex>
#include <new>
#include <string>

#include "dmpm/forward_process.hpp"
#include "dmpm/harness.hpp"

struct dmpm_config {
  dmpm::RunConfig config;
};

struct dmpm_model {
  dmpm::DenoiserNet net;
  double t_f;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_log_mutex;
dmpm_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

dmpm::LogFn make_logger() {
  std::lock_guard lock(g_log_mutex);
  if (!g_log_fn) return {};
  dmpm_log_fn fn = g_log_fn;
  void* user = g_log_user;
  return [fn, user](const std::string& msg) { fn(msg.c_str(), user); };
}

dmpm_status set_error(dmpm_status status, const std::string& msg) {
  g_last_error = msg;
  return status;
}

/// Runs `body`, translating exceptions into status codes.
template <typename F>
dmpm_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return DMPM_OK;
  } catch (const dmpm::Error& e) {
    return set_error(static_cast<dmpm_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(DMPM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(DMPM_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(DMPM_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (!p) dmpm::fail(dmpm::ErrorCode::kArgument, std::string(what) + " must not be NULL");
}

std::vector<dmpm::BitState> unpack(const uint8_t* data, size_t n, size_t d) {
  std::vector<dmpm::BitState> xs;
  xs.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    std::vector<std::uint8_t> bits(data + i * d, data + (i + 1) * d);
    for (auto b : bits) {
      if (b > 1) dmpm::fail(dmpm::ErrorCode::kArgument, "state entries must be 0 or 1");
    }
    xs.emplace_back(std::move(bits));
  }
  return xs;
}

}  // namespace

extern "C" {

const char* dmpm_version(void) { return "1.0.0"; }

const char* dmpm_last_error(void) { return g_last_error.c_str(); }

const char* dmpm_status_string(dmpm_status status) {
  switch (status) {
    case DMPM_OK: return "ok";
    case DMPM_ERR_ARGUMENT: return "invalid argument";
    case DMPM_ERR_DIMENSION: return "dimension mismatch";
    case DMPM_ERR_ENUMERATION_LIMIT: return "enumeration limit exceeded";
    case DMPM_ERR_INVALID_SCORE: return "invalid score";
    case DMPM_ERR_UNREACHABLE_STATE: return "unreachable state";
    case DMPM_ERR_ASSUMPTION: return "assumption violated";
    case DMPM_ERR_MODEL_CORRUPT: return "model corrupt";
    case DMPM_ERR_TRAINING: return "training error";
    case DMPM_ERR_CHECKPOINT_FORMAT: return "checkpoint format error";
    case DMPM_ERR_CHECKPOINT_VERSION: return "checkpoint version error";
    case DMPM_ERR_CHECKPOINT_TRUNCATED: return "checkpoint truncated";
    case DMPM_ERR_CONFIG_MISMATCH: return "config mismatch";
    case DMPM_ERR_CONFIG: return "config error";
    case DMPM_ERR_IO: return "I/O error";
    case DMPM_ERR_SAMPLER: return "sampler error";
    case DMPM_ERR_PLANNING: return "planning error";
    case DMPM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void dmpm_set_log_callback(dmpm_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

// --- Config ---------------------------------------------------------------------

dmpm_status dmpm_config_default(dmpm_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new dmpm_config{dmpm::RunConfig::defaults()};
  });
}

dmpm_status dmpm_config_load(const char* path, dmpm_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new dmpm_config{dmpm::RunConfig::load(path)};
  });
}

dmpm_status dmpm_config_parse(const char* json_text, dmpm_config** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    *out = new dmpm_config{dmpm::RunConfig::from_json(json_text)};
  });
}

void dmpm_config_free(dmpm_config* config) { delete config; }

dmpm_status dmpm_config_set_seed(dmpm_config* config, uint64_t seed) {
  return guarded([&] {
    need(config, "config");
    config->config.seed = seed;
  });
}

dmpm_status dmpm_config_set_out_dir(dmpm_config* config, const char* dir) {
  return guarded([&] {
    need(config, "config");
    need(dir, "dir");
    config->config.out_dir = dir;
  });
}

dmpm_status dmpm_config_set_sampler(dmpm_config* config, const char* kind) {
  return guarded([&] {
    need(config, "config");
    need(kind, "kind");
    config->config.sampler = dmpm::parse_sampler_kind(kind);
  });
}

dmpm_status dmpm_config_set_steps(dmpm_config* config, uint64_t steps) {
  return guarded([&] {
    need(config, "config");
    if (steps < 1) dmpm::fail(dmpm::ErrorCode::kConfig, "steps must be >= 1");
    config->config.schedule_steps = steps;
  });
}

dmpm_status dmpm_config_set_schedule(dmpm_config* config, const char* kind) {
  return guarded([&] {
    need(config, "config");
    need(kind, "kind");
    config->config.schedule = dmpm::parse_schedule_kind(kind);
  });
}

dmpm_status dmpm_config_to_json(const dmpm_config* config, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    need(config, "config");
    const std::string text = config->config.to_json();
    if (needed) *needed = text.size() + 1;
    if (!buf) return;
    if (cap < text.size() + 1) dmpm::fail(dmpm::ErrorCode::kArgument, "buffer too small for config JSON");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

dmpm_status dmpm_config_hash(const dmpm_config* config, char* buf, size_t cap) {
  return guarded([&] {
    need(config, "config");
    need(buf, "buf");
    const std::string h = config->config.lineage_hash();
    if (cap < h.size() + 1) dmpm::fail(dmpm::ErrorCode::kArgument, "hash buffer needs 17 bytes");
    std::memcpy(buf, h.c_str(), h.size() + 1);
  });
}

// --- Commands -------------------------------------------------------------------

dmpm_status dmpm_cmd_gen_data(const dmpm_config* config) {
  return guarded([&] {
    need(config, "config");
    dmpm::cmd_gen_data(config->config, make_logger());
  });
}

dmpm_status dmpm_cmd_train(const dmpm_config* config, int resume, int allow_mismatch) {
  return guarded([&] {
    need(config, "config");
    dmpm::cmd_train(config->config, resume != 0, allow_mismatch != 0, make_logger());
  });
}

dmpm_status dmpm_cmd_sample(const dmpm_config* config, int exact_oracle, uint64_t n, const char* checkpoint,
                            int allow_mismatch) {
  return guarded([&] {
    need(config, "config");
    dmpm::cmd_sample(config->config, exact_oracle != 0, n, checkpoint ? checkpoint : "", allow_mismatch != 0,
                     make_logger());
  });
}

dmpm_status dmpm_cmd_eval(const dmpm_config* config, const char* samples, int allow_mismatch) {
  return guarded([&] {
    need(config, "config");
    dmpm::cmd_eval(config->config, samples ? samples : "", allow_mismatch != 0, make_logger());
  });
}

dmpm_status dmpm_cmd_validate_bounds(const dmpm_config* config, double corrupt_shift, uint64_t* violations) {
  return guarded([&] {
    need(config, "config");
    const auto r = dmpm::cmd_validate_bounds(config->config, corrupt_shift, make_logger());
    if (violations) *violations = r.violations;
  });
}

dmpm_status dmpm_cmd_forward_diag(const dmpm_config* config) {
  return guarded([&] {
    need(config, "config");
    dmpm::cmd_forward_diag(config->config, make_logger());
  });
}

// --- Numerics -------------------------------------------------------------------

dmpm_status dmpm_alpha(double t, double lambda, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = dmpm::alpha(t, lambda);
  });
}

dmpm_status dmpm_kernel1(int a, int b, double t, double lambda, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = dmpm::kernel1(a, b, t, lambda);
  });
}

dmpm_status dmpm_time_grid(const char* kind, uint64_t steps, double horizon, double* out, size_t cap) {
  return guarded([&] {
    need(kind, "kind");
    need(out, "out");
    const auto s = dmpm::time_grid(dmpm::parse_schedule_kind(kind), steps, horizon);
    if (cap < s.grid.size()) dmpm::fail(dmpm::ErrorCode::kArgument, "time grid buffer needs K + 1 entries");
    std::copy(s.grid.begin(), s.grid.end(), out);
  });
}

dmpm_status dmpm_swd(const uint8_t* a, size_t n_a, const uint8_t* b, size_t n_b, size_t d, size_t n_directions,
                     uint64_t seed, double* value, double* std_error) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(value, "value");
    if (n_a == 0 || n_b == 0 || d == 0) dmpm::fail(dmpm::ErrorCode::kArgument, "SWD inputs must be nonempty");
    dmpm::Rng rng(dmpm::derive_seed(seed, "swd-directions"));
    const auto est = dmpm::swd(dmpm::EmpiricalSet(unpack(a, n_a, d)), dmpm::EmpiricalSet(unpack(b, n_b, d)),
                               n_directions, rng);
    *value = est.value;
    if (std_error) *std_error = est.std_error;
  });
}

// --- Model ----------------------------------------------------------------------

dmpm_status dmpm_model_load(const char* checkpoint, dmpm_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    auto ck = dmpm::load_checkpoint(checkpoint);
    ck.net.check_finite();
    *out = new dmpm_model{std::move(ck.net), ck.meta.t_f};
  });
}

void dmpm_model_free(dmpm_model* model) { delete model; }

dmpm_status dmpm_model_dim(const dmpm_model* model, size_t* d) {
  return guarded([&] {
    need(model, "model");
    need(d, "d");
    *d = model->net.dim();
  });
}

dmpm_status dmpm_model_predict(const dmpm_model* model, double t, const uint8_t* states, size_t n, double* out) {
  return guarded([&] {
    need(model, "model");
    need(states, "states");
    need(out, "out");
    if (!(t >= 0.0 && t <= model->t_f)) dmpm::fail(dmpm::ErrorCode::kArgument, "t must lie in [0, T_f]");
    const size_t d = model->net.dim();
    const auto xs = unpack(states, n, d);
    if (n == 0) return;
    const Eigen::MatrixXd y = model->net.predict(t, xs);
    std::copy(y.data(), y.data() + y.size(), out);
  });
}

}  // extern "C"
