#ifndef DML_H
#define DML_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; 2 and 3 match the CLI exit codes.
 */
typedef enum DmlStatus {
  DML_STATUS_OK = 0,
  /**
   * Null pointer, invalid UTF-8 or a bad enum value.
   */
  DML_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration, validation or ingestion failure.
   */
  DML_STATUS_INPUT_ERROR = 2,
  DML_STATUS_NUMERICAL_ERROR = 3,
  DML_STATUS_PANIC = 4,
} DmlStatus;

typedef enum DmlRegime {
  DML_REGIME_HEAVY_TAIL_Q = 0,
  DML_REGIME_SUB_GAUSSIAN = 1,
  DML_REGIME_BOUNDED = 2,
} DmlRegime;

/**
 * Opaque result of [`dml_run`].
 */
typedef struct DmlReport DmlReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library; do not free.
 */
const char *dml_last_error(void);

/**
 * Library version as a static string.
 */
const char *dml_version(void);

/**
 * Parses a configuration (TOML, or JSON if `is_json` is nonzero), runs it
 * and stores the report in `*out`.
 *
 * # Safety
 * `config` must be a nul-terminated string and `out` a valid pointer.
 */
enum DmlStatus dml_run(const char *config, int32_t is_json, struct DmlReport **out);

/**
 * Full report as JSON; free with [`dml_string_free`].
 *
 * # Safety
 * `report` must come from [`dml_run`] and `out` must be valid.
 */
enum DmlStatus dml_report_json(const struct DmlReport *report, char **out);

/**
 * Canonical JSON of the results block alone; free with [`dml_string_free`].
 *
 * # Safety
 * `report` must come from [`dml_run`] and `out` must be valid.
 */
enum DmlStatus dml_report_results_json(const struct DmlReport *report, char **out);

/**
 * # Safety
 * `report` must come from [`dml_run`] or be null.
 */
void dml_report_free(struct DmlReport *report);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void dml_string_free(char *s);

/**
 * Total of the finite-dimensional bound. `inputs_json` is an object of
 * input overrides (`"{}"` for the defaults); `regime_code` is a [`DmlRegime`]
 * value.
 *
 * # Safety
 * `inputs_json` must be a nul-terminated string and `total` valid.
 */
enum DmlStatus dml_bound_theorem1(const char *inputs_json, int32_t regime_code, double *total);

/**
 * Total of the continuum bound.
 *
 * # Safety
 * `inputs_json` must be a nul-terminated string and `total` valid.
 */
enum DmlStatus dml_bound_theorem2(const char *inputs_json, double *total);

/**
 * Sup-t critical value for a `p x p` row-major correlation matrix.
 *
 * # Safety
 * `corr` must point to `p * p` doubles and `out` must be valid.
 */
enum DmlStatus dml_sup_t_critical_value(const double *corr,
                                        size_t p,
                                        double level,
                                        size_t draws,
                                        uint64_t seed,
                                        int32_t one_sided,
                                        double *out);

/**
 * Two-sample Kolmogorov distance.
 *
 * # Safety
 * `a` and `b` must point to `na` and `nb` doubles; `out` must be valid.
 */
enum DmlStatus dml_ks_distance(const double *a, size_t na, const double *b, size_t nb, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DML_H */
