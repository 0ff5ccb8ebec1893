#ifndef UDGC_H
#define UDGC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum UdgcStatus {
  UDGC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  UDGC_STATUS_NULL_POINTER = 1,
  UDGC_STATUS_SHAPE = 2,
  UDGC_STATUS_INPUT = 3,
  UDGC_STATUS_CONFIG = 4,
  UDGC_STATUS_IO = 5,
  /**
   * Non-finite values or a degenerate row.
   */
  UDGC_STATUS_NUMERIC = 6,
  /**
   * An internal panic was caught at the boundary.
   */
  UDGC_STATUS_PANIC = 7,
} UdgcStatus;

/**
 * A loaded or generated graph dataset.
 */
typedef struct UdgcDataset UdgcDataset;

/**
 * Dense row-major matrix.
 */
typedef struct UdgcMatrix UdgcMatrix;

/**
 * Clustering scores.
 */
typedef struct UdgcScores {
  double acc;
  double nmi;
  double ari;
  size_t n;
  size_t c_pred;
  size_t c_true;
} UdgcScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library name and version, as a static string.
 */
const char *udgc_version(void);

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *udgc_last_error(void);

/**
 * Copies `rows * cols` values from `data` into a new matrix.
 *
 * # Safety
 * `data` must be valid for `rows * cols` reads; `out` must be writable.
 */
enum UdgcStatus udgc_matrix_new(size_t rows,
                                size_t cols,
                                const double *data,
                                struct UdgcMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library that was not yet freed.
 */
void udgc_matrix_free(struct UdgcMatrix *m);

/**
 * # Safety
 * `m` must be a live handle.
 */
size_t udgc_matrix_rows(const struct UdgcMatrix *m);

/**
 * # Safety
 * `m` must be a live handle.
 */
size_t udgc_matrix_cols(const struct UdgcMatrix *m);

/**
 * Row-major values, valid while the handle lives.
 *
 * # Safety
 * `m` must be a live handle.
 */
const double *udgc_matrix_data(const struct UdgcMatrix *m);

/**
 * Entropic transport between uniform marginals.
 *
 * # Safety
 * Pointers must be live handles or writable locations; `iterations` and
 * `residual` may be null.
 */
enum UdgcStatus udgc_sinkhorn(const struct UdgcMatrix *cost,
                              double reg,
                              size_t max_iters,
                              double tol,
                              struct UdgcMatrix **plan,
                              size_t *iterations,
                              double *residual);

/**
 * Coupled two-view transport with consensus weight `epsilon`.
 *
 * # Safety
 * Pointers must be live handles or writable locations; `objective` may be null.
 */
enum UdgcStatus udgc_acot(const struct UdgcMatrix *cost,
                          const struct UdgcMatrix *cost_prime,
                          double epsilon,
                          struct UdgcMatrix **pi,
                          struct UdgcMatrix **pi_prime,
                          double *objective);

/**
 * Centers discovery on `points` followed by matching of unit-norm `agents`
 * to the normalized centers.
 *
 * # Safety
 * Pointers must be live handles or writable locations; `center_loss` may be null.
 */
enum UdgcStatus udgc_caot(const struct UdgcMatrix *points,
                          const struct UdgcMatrix *agents,
                          double eta,
                          double eta1,
                          struct UdgcMatrix **centers,
                          struct UdgcMatrix **psi,
                          double *center_loss);

/**
 * Accuracy, NMI and ARI of `pred` against `truth`, both of length `n`.
 *
 * # Safety
 * `pred` and `truth` must be valid for `n` reads; `out` must be writable.
 */
enum UdgcStatus udgc_evaluate(const size_t *pred,
                              const size_t *truth,
                              size_t n,
                              struct UdgcScores *out);

/**
 * Loads `<dir>/<name>_A.txt` and its companion files.
 *
 * # Safety
 * `dir` and `name` must be nul-terminated strings; `out` must be writable.
 */
enum UdgcStatus udgc_dataset_load(const char *dir, const char *name, struct UdgcDataset **out);

/**
 * Erdős–Rényi graphs, `per_class` per entry of `p`, with node counts drawn
 * from `min_nodes..=max_nodes`.
 *
 * # Safety
 * `p` must be valid for `classes` reads; `out` must be writable.
 */
enum UdgcStatus udgc_dataset_synthetic(size_t per_class,
                                       const double *p,
                                       size_t classes,
                                       size_t min_nodes,
                                       size_t max_nodes,
                                       uint64_t seed,
                                       struct UdgcDataset **out);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
void udgc_dataset_free(struct UdgcDataset *ds);

/**
 * Number of graphs.
 *
 * # Safety
 * `ds` must be a live handle.
 */
size_t udgc_dataset_len(const struct UdgcDataset *ds);

/**
 * Ground-truth labels into `labels` (length `len`, which must equal the
 * dataset size). Fails with `Input` when some graph is unlabeled.
 *
 * # Safety
 * `ds` must be a live handle and `labels` valid for `len` writes.
 */
enum UdgcStatus udgc_dataset_labels(const struct UdgcDataset *ds, size_t *labels, size_t len);

/**
 * Trains on `ds` and writes the cluster of every graph to `labels`.
 *
 * `config` is null or flat `key = value` text using the command-line keys;
 * only the training settings are used, with the first `lambda` value.
 *
 * # Safety
 * `ds` must be a live handle, `config` null or nul-terminated, `labels`
 * valid for `len` writes and `final_loss` null or writable.
 */
enum UdgcStatus udgc_fit(const struct UdgcDataset *ds,
                         const char *config,
                         size_t *labels,
                         size_t len,
                         double *final_loss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UDGC_H */
