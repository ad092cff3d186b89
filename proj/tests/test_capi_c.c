/* Compiles the public header as C99 and exercises a few entry points. */
#include <math.h>
#include <stdio.h>
#include <string.h>

#include "dmpm/dmpm.h"

static int failures = 0;

#define CHECK(cond)                                            \
  do {                                                         \
    if (!(cond)) {                                             \
      fprintf(stderr, "%s:%d: CHECK(%s)\n", __FILE__, __LINE__, #cond); \
      ++failures;                                              \
    }                                                          \
  } while (0)

int main(void) {
  double a = 0.0, k = 0.0;
  dmpm_config* cfg = NULL;
  char hash[17];
  double grid[3];

  CHECK(dmpm_alpha(0.5 * log(2.0), 1.0, &a) == DMPM_OK);
  CHECK(fabs(a - 0.5) < 1e-12);
  CHECK(dmpm_kernel1(0, 1, 0.5 * log(2.0), 1.0, &k) == DMPM_OK);
  CHECK(fabs(k - 0.25) < 1e-12);
  CHECK(dmpm_alpha(0.0, 1.0, NULL) == DMPM_ERR_ARGUMENT);
  CHECK(strlen(dmpm_last_error()) > 0);

  CHECK(dmpm_config_default(&cfg) == DMPM_OK);
  CHECK(dmpm_config_hash(cfg, hash, sizeof hash) == DMPM_OK);
  CHECK(strlen(hash) == 16);
  CHECK(dmpm_config_set_sampler(cfg, "bogus") != DMPM_OK);
  dmpm_config_free(cfg);

  CHECK(dmpm_time_grid("cosine", 2, 3.0, grid, 3) == DMPM_OK);
  CHECK(fabs(grid[1] - 2.1213203435596424) < 1e-9);
  CHECK(dmpm_time_grid("cosine", 2, 3.0, grid, 2) == DMPM_ERR_ARGUMENT);

  if (failures) {
    fprintf(stderr, "%d C API check(s) failed\n", failures);
    return 1;
  }
  printf("C API checks passed\n");
  return 0;
}
