/* C interface to the discrete Markov probabilistic model toolkit.
 *
 * Every function returns a dmpm_status (0 on success). On failure the message of the most
 * recent error on the calling thread is available from dmpm_last_error(). Handles are opaque
 * and owned by the caller; release them with the matching *_free function. */
#ifndef DMPM_H
#define DMPM_H

#include <stddef.h>
#include <stdint.h>

#if defined(DMPM_BUILDING_LIBRARY)
#define DMPM_API __attribute__((visibility("default")))
#else
#define DMPM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmpm_status {
  DMPM_OK = 0,
  DMPM_ERR_ARGUMENT = 1,
  DMPM_ERR_DIMENSION = 2,
  DMPM_ERR_ENUMERATION_LIMIT = 3,
  DMPM_ERR_INVALID_SCORE = 4,
  DMPM_ERR_UNREACHABLE_STATE = 5,
  DMPM_ERR_ASSUMPTION = 6,
  DMPM_ERR_MODEL_CORRUPT = 7,
  DMPM_ERR_TRAINING = 8,
  DMPM_ERR_CHECKPOINT_FORMAT = 9,
  DMPM_ERR_CHECKPOINT_VERSION = 10,
  DMPM_ERR_CHECKPOINT_TRUNCATED = 11,
  DMPM_ERR_CONFIG_MISMATCH = 12,
  DMPM_ERR_CONFIG = 13,
  DMPM_ERR_IO = 14,
  DMPM_ERR_SAMPLER = 15,
  DMPM_ERR_PLANNING = 16,
  DMPM_ERR_INTERNAL = 99
} dmpm_status;

typedef struct dmpm_config dmpm_config;
typedef struct dmpm_model dmpm_model;

/* Receives progress and warning lines from commands. */
typedef void (*dmpm_log_fn)(const char* message, void* user);

DMPM_API const char* dmpm_version(void);
DMPM_API const char* dmpm_last_error(void);
DMPM_API const char* dmpm_status_string(dmpm_status status);
/* Installs a process-wide log sink (NULL disables logging). */
DMPM_API void dmpm_set_log_callback(dmpm_log_fn fn, void* user);

/* --- Run configuration ------------------------------------------------------------- */

DMPM_API dmpm_status dmpm_config_default(dmpm_config** out);
DMPM_API dmpm_status dmpm_config_load(const char* path, dmpm_config** out);
DMPM_API dmpm_status dmpm_config_parse(const char* json_text, dmpm_config** out);
DMPM_API void dmpm_config_free(dmpm_config* config);
DMPM_API dmpm_status dmpm_config_set_seed(dmpm_config* config, uint64_t seed);
DMPM_API dmpm_status dmpm_config_set_out_dir(dmpm_config* config, const char* dir);
/* kind: continuous | percoord | discrete | flip | denoise */
DMPM_API dmpm_status dmpm_config_set_sampler(dmpm_config* config, const char* kind);
DMPM_API dmpm_status dmpm_config_set_steps(dmpm_config* config, uint64_t steps);
/* kind: linear | quadratic | cosine */
DMPM_API dmpm_status dmpm_config_set_schedule(dmpm_config* config, const char* kind);
/* Writes the canonical JSON into buf (NUL-terminated). *needed receives the size required
 * including the terminator; pass buf = NULL to query it. */
DMPM_API dmpm_status dmpm_config_to_json(const dmpm_config* config, char* buf, size_t cap, size_t* needed);
/* 16 hex digits + NUL: buf must hold at least 17 bytes. */
DMPM_API dmpm_status dmpm_config_hash(const dmpm_config* config, char* buf, size_t cap);

/* --- Commands (write into the configured output directory) ------------------------- */

DMPM_API dmpm_status dmpm_cmd_gen_data(const dmpm_config* config);
DMPM_API dmpm_status dmpm_cmd_train(const dmpm_config* config, int resume, int allow_mismatch);
/* n = 0 uses the configured count; checkpoint = NULL uses <out>/checkpoint.bin. */
DMPM_API dmpm_status dmpm_cmd_sample(const dmpm_config* config, int exact_oracle, uint64_t n, const char* checkpoint,
                                     int allow_mismatch);
/* samples = NULL uses <out>/samples.txt. */
DMPM_API dmpm_status dmpm_cmd_eval(const dmpm_config* config, const char* samples, int allow_mismatch);
/* corrupt_shift > 0 injects 1 - s' = 1 - s + shift. *violations receives the number of violated checks. */
DMPM_API dmpm_status dmpm_cmd_validate_bounds(const dmpm_config* config, double corrupt_shift,
                                              uint64_t* violations);
DMPM_API dmpm_status dmpm_cmd_forward_diag(const dmpm_config* config);

/* --- Numerics ------------------------------------------------------------------------ */

DMPM_API dmpm_status dmpm_alpha(double t, double lambda, double* out);
/* One-coordinate forward transition probability P(X_t = b | X_0 = a), a, b in {0, 1}. */
DMPM_API dmpm_status dmpm_kernel1(int a, int b, double t, double lambda, double* out);
/* Writes K + 1 grid points into out (capacity cap). */
DMPM_API dmpm_status dmpm_time_grid(const char* kind, uint64_t steps, double horizon, double* out, size_t cap);
/* Sliced Wasserstein distance between two row-major 0/1 sample matrices (n x d). */
DMPM_API dmpm_status dmpm_swd(const uint8_t* a, size_t n_a, const uint8_t* b, size_t n_b, size_t d,
                              size_t n_directions, uint64_t seed, double* value, double* std_error);

/* --- Trained denoiser ---------------------------------------------------------------- */

DMPM_API dmpm_status dmpm_model_load(const char* checkpoint, dmpm_model** out);
DMPM_API void dmpm_model_free(dmpm_model* model);
DMPM_API dmpm_status dmpm_model_dim(const dmpm_model* model, size_t* d);
/* Denoiser at backward time t for n row-major states (n x d bytes); out holds n x d doubles. */
DMPM_API dmpm_status dmpm_model_predict(const dmpm_model* model, double t, const uint8_t* states, size_t n,
                                        double* out);

#ifdef __cplusplus
}
#endif

#endif /* DMPM_H */
