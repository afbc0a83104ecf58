#ifndef DPLQG_H
#define DPLQG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Gain matrices readable from a synthesis handle.
 */
typedef enum DplqgMatrix {
  DPLQG_MATRIX_CONTROL_RICCATI = 0,
  DPLQG_MATRIX_FEEDBACK_GAIN = 1,
  DPLQG_MATRIX_REFERENCE_GAIN = 2,
  DPLQG_MATRIX_KALMAN_GAIN = 3,
  DPLQG_MATRIX_PRIOR_COVARIANCE = 4,
  DPLQG_MATRIX_POSTERIOR_COVARIANCE = 5,
} DplqgMatrix;

/*
 Result of an API call. Nonzero values match the command-line exit codes.
 */
typedef enum DplqgStatus {
  DPLQG_STATUS_OK = 0,
  DPLQG_STATUS_PARSE = 2,
  DPLQG_STATUS_VALIDATION = 3,
  DPLQG_STATUS_CONVERGENCE = 4,
  DPLQG_STATUS_INFEASIBLE = 5,
  DPLQG_STATUS_NUMERICAL = 6,
  DPLQG_STATUS_IO = 7,
  DPLQG_STATUS_NULL_ARGUMENT = 8,
  DPLQG_STATUS_BUFFER_TOO_SMALL = 9,
  DPLQG_STATUS_PANIC = 10,
} DplqgStatus;

/*
 Opaque loaded scenario.
 */
typedef struct DplqgScenario DplqgScenario;

/*
 Opaque controller synthesized for a scenario.
 */
typedef struct DplqgSynthesis DplqgSynthesis;

/*
 Lower and upper end of a bound.
 */
typedef struct DplqgInterval {
  double lower;
  double upper;
} DplqgInterval;

/*
 Trace and log-det bounds with the exact values they enclose (NaN when not computed).
 */
typedef struct DplqgBoundReport {
  struct DplqgInterval trace_sigma;
  struct DplqgInterval trace_sigma_bar;
  struct DplqgInterval logdet_sigma;
  struct DplqgInterval logdet_sigma_bar;
  double exact_trace_sigma;
  double exact_trace_sigma_bar;
  double exact_logdet_sigma;
  double exact_logdet_sigma_bar;
} DplqgBoundReport;

/*
 Average cost with and without privacy.
 */
typedef struct DplqgCostReport {
  double j_total;
  double j_nonprivate;
  double overhead;
  double reference_penalty;
} DplqgCostReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *dplqg_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *dplqg_version(void);

/*
 Inverse of the standard normal tail Q for p in (0, 1).
 */
enum DplqgStatus dplqg_q_inverse(double p, double *out);

/*
 Gaussian-mechanism standard deviation for (ε, δ) and sensitivity.
 */
enum DplqgStatus dplqg_noise_scale(double epsilon, double delta, double sensitivity, double *out);

/*
 Loads a scenario file. When `has_seed` is nonzero `seed` replaces the file's seed.
 */
enum DplqgStatus dplqg_scenario_load(const char *path,
                                     uint64_t seed,
                                     bool has_seed,
                                     struct DplqgScenario **out);

/*
 Parses a scenario from NUL-terminated TOML text.
 */
enum DplqgStatus dplqg_scenario_from_str(const char *text,
                                         uint64_t seed,
                                         bool has_seed,
                                         struct DplqgScenario **out);

/*
 Releases a scenario handle. NULL is ignored.
 */
void dplqg_scenario_free(struct DplqgScenario *s);

/*
 Number of agents in a scenario, 0 for NULL.
 */
size_t dplqg_scenario_agent_count(const struct DplqgScenario *s);

/*
 Synthesizes the controller for run 0 of a scenario.
 */
enum DplqgStatus dplqg_synthesis_new(const struct DplqgScenario *s, struct DplqgSynthesis **out);

/*
 Releases a synthesis handle. NULL is ignored.
 */
void dplqg_synthesis_free(struct DplqgSynthesis *s);

/*
 Copies a matrix in row-major order into `buf` of `len` doubles.

 `rows` and `cols` always receive the shape. With a NULL `buf` only the
 shape is written; a short buffer yields `BUFFER_TOO_SMALL`.
 */
enum DplqgStatus dplqg_synthesis_matrix(const struct DplqgSynthesis *s,
                                        enum DplqgMatrix which,
                                        double *buf,
                                        size_t len,
                                        size_t *rows,
                                        size_t *cols);

/*
 Spectral radius of A + BL.
 */
enum DplqgStatus dplqg_synthesis_closed_loop_radius(const struct DplqgSynthesis *s, double *out);

/*
 Covariance bounds for the synthesized network.
 */
enum DplqgStatus dplqg_bounds(const struct DplqgSynthesis *s,
                              bool paper_literal,
                              struct DplqgBoundReport *out);

/*
 Total private cost, non-private cost and their difference.
 */
enum DplqgStatus dplqg_cost(const struct DplqgSynthesis *s, struct DplqgCostReport *out);

/*
 Runs a named preset and writes its files into `out_dir`.
 */
enum DplqgStatus dplqg_run_preset(const char *name,
                                  uint64_t seed,
                                  bool has_seed,
                                  const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPLQG_H */
