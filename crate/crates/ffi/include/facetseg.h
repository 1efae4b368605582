#ifndef FACETSEG_H
#define FACETSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_POINTER = 1,
  FS_STATUS_INVALID_ARGUMENT = 2,
  FS_STATUS_IO = 3,
  FS_STATUS_FORMAT = 4,
  /**
   * Empty, degenerate or non-finite geometry.
   */
  FS_STATUS_DEGENERATE = 5,
  /**
   * The solver hit its iteration limit. Outputs hold the last iterate.
   */
  FS_STATUS_NOT_CONVERGED = 6,
  /**
   * The output buffer length does not match the input.
   */
  FS_STATUS_SIZE_MISMATCH = 7,
  FS_STATUS_PANIC = 8,
  FS_STATUS_INTERNAL = 9,
} FsStatus;

/**
 * Opaque point cloud.
 */
typedef struct FsCloud FsCloud;

/**
 * Opaque trained pair predictor.
 */
typedef struct FsModel FsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fs_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the next
 * failing call on this thread.
 */
const char *fs_last_error_message(void);

/**
 * Reads an ASCII PLY file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FsStatus fs_cloud_read_ply(const char *path, struct FsCloud **out);

/**
 * Builds a cloud from `n` points stored as `x0 y0 z0 x1 ...`.
 *
 * # Safety
 * `xyz` must point to `3 * n` doubles and `out` must be valid.
 */
enum FsStatus fs_cloud_from_xyz(const double *xyz, size_t n, struct FsCloud **out);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t fs_cloud_len(const struct FsCloud *cloud);

/**
 * Copies the coordinates into `xyz`, which must hold `3 * len` doubles.
 *
 * # Safety
 * `cloud` must be a live handle and `xyz` must point to `3 * len` writable doubles.
 */
enum FsStatus fs_cloud_points(const struct FsCloud *cloud, double *xyz, size_t len);

/**
 * Translates and scales the cloud in place into the unit box.
 *
 * # Safety
 * `cloud` must be a live handle.
 */
enum FsStatus fs_cloud_normalize(struct FsCloud *cloud);

/**
 * Releases a cloud. Null is ignored.
 *
 * # Safety
 * `cloud` must be null or a handle not yet freed.
 */
void fs_cloud_free(struct FsCloud *cloud);

/**
 * Loads a model saved by `facetseg train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FsStatus fs_model_load(const char *path, struct FsModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void fs_model_free(struct FsModel *model);

/**
 * Region-growing baseline. `alpha_deg` is the normal angle threshold in degrees;
 * `min_cluster == 0` selects the default minimum size. Writes one label per point.
 *
 * # Safety
 * `cloud` must be a live handle and `labels` must point to `len` writable values.
 */
enum FsStatus fs_rgs_segment(const struct FsCloud *cloud,
                             size_t k,
                             double alpha_deg,
                             double gamma,
                             size_t min_cluster,
                             int64_t *labels,
                             size_t len);

/**
 * Full pipeline with the geometric predictor. Writes one label per point; returns
 * `NotConverged` (labels still written) if the solver hit its iteration limit.
 *
 * # Safety
 * `cloud` must be a live handle and `labels` must point to `len` writable values.
 */
enum FsStatus fs_segment_analytic(const struct FsCloud *cloud,
                                  size_t m,
                                  int64_t *labels,
                                  size_t len);

/**
 * Full pipeline with a trained model. Same outputs as [`fs_segment_analytic`].
 *
 * # Safety
 * `cloud` and `model` must be live handles and `labels` must point to `len` writable values.
 */
enum FsStatus fs_segment_with_model(const struct FsCloud *cloud,
                                    const struct FsModel *model,
                                    size_t m,
                                    int64_t *labels,
                                    size_t len);

/**
 * Solves the lifted problem for the `n x n` row-major soft matrix `x_in` and writes
 * the `n x n` solution to `x_out`. `tol <= 0` or `max_iter == 0` select defaults.
 * `NotConverged` still writes the last iterate.
 *
 * # Safety
 * `x_in` must point to `n * n` doubles and `x_out` to `n * n` writable doubles.
 */
enum FsStatus fs_matchlift_solve(const double *x_in,
                                 size_t n,
                                 size_t m,
                                 double tol,
                                 size_t max_iter,
                                 double *x_out);

/**
 * Rounds an `n x n` row-major matrix into clusters, one label per row.
 *
 * # Safety
 * `x` must point to `n * n` doubles and `labels` to `n` writable values.
 */
enum FsStatus fs_round_clusters(const double *x, size_t n, size_t m, int64_t *labels);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACETSEG_H */
