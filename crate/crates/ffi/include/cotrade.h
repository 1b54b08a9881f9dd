#ifndef COTRADE_H
#define COTRADE_H

/* Generated by cbindgen from the cotrade-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum CotradeStatus {
  COTRADE_STATUS_OK = 0,
  COTRADE_STATUS_NULL_POINTER = 1,
  COTRADE_STATUS_INVALID_ARGUMENT = 2,
  COTRADE_STATUS_PARSE_ERROR = 3,
  COTRADE_STATUS_IO_ERROR = 4,
  COTRADE_STATUS_NUMERICAL_ERROR = 5,
  COTRADE_STATUS_PIPELINE_ERROR = 6,
  COTRADE_STATUS_PANIC = 7,
} CotradeStatus;

/**
 * Opaque trade-ledger handle.
 */
typedef struct CotradeTable CotradeTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or NULL.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *cotrade_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *cotrade_version(void);

/**
 * Parses a trade CSV file into a new table handle, or returns NULL with the
 * error retrievable via `cotrade_last_error_message`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; the returned handle must be
 * released with `cotrade_table_free`.
 */
struct CotradeTable *cotrade_table_from_csv(const char *path);

/**
 * Number of trades in the table.
 *
 * # Safety
 * `table` must be a live handle from `cotrade_table_from_csv`.
 */
size_t cotrade_table_len(const struct CotradeTable *table);

/**
 * Number of distinct traders in the table.
 *
 * # Safety
 * `table` must be a live handle from `cotrade_table_from_csv`.
 */
size_t cotrade_table_trader_count(const struct CotradeTable *table);

/**
 * Releases a table handle. NULL is ignored.
 *
 * # Safety
 * `table` must be NULL or a handle not yet freed.
 */
void cotrade_table_free(struct CotradeTable *table);

/**
 * Upper-tail hypergeometric p-value `P(X >= n_pq)` for co-occurrence counts.
 */
enum CotradeStatus cotrade_hypergeom_pvalue(unsigned long long n,
                                            unsigned long long n_p,
                                            unsigned long long n_q,
                                            unsigned long long n_pq,
                                            double *out);

/**
 * Log of the Ewens probability of the size histogram `counts[0..len]`,
 * where `counts[i]` is the number of clusters of size `i + 1`.
 *
 * # Safety
 * `counts` must point to `len` readable u64 values.
 */
enum CotradeStatus cotrade_ewens_log_pmf(const unsigned long long *counts,
                                         size_t len,
                                         double theta,
                                         double *out);

/**
 * Probability of the size histogram under the singleton-free conditional
 * Ewens law (zero outside the support).
 *
 * # Safety
 * `counts` must point to `len` readable u64 values.
 */
enum CotradeStatus cotrade_conditional_ewens_pmf(const unsigned long long *counts,
                                                 size_t len,
                                                 double theta,
                                                 double *out);

/**
 * `lambda_n(theta)`: probability that an Ewens partition of `n` has no
 * singleton cluster.
 */
enum CotradeStatus cotrade_lambda_n(double theta, size_t n, double *out);

/**
 * Expected number of clusters of an (optionally conditional) Ewens
 * partition of `n` at the given theta.
 */
enum CotradeStatus cotrade_expected_clusters(size_t n, double theta, bool conditional, double *out);

/**
 * Inverts the expected-cluster-count curve: the theta at which an
 * (optionally conditional) Ewens partition of `n` has `observed_k` expected
 * clusters.
 */
enum CotradeStatus cotrade_estimate_theta(double observed_k,
                                          size_t n,
                                          bool conditional,
                                          double *out);

/**
 * Runs pipeline stages from a config file. `stages` is a comma-separated
 * subset of `simulate,states,svn,cluster,ewens-fit,track,backtest,report`;
 * NULL or empty means the full pipeline.
 *
 * # Safety
 * `config_path` must be a valid NUL-terminated string; `stages` must be
 * NULL or a valid NUL-terminated string.
 */
enum CotradeStatus cotrade_run_pipeline(const char *config_path, const char *stages);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COTRADE_H */
