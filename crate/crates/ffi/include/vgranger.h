#ifndef VGRANGER_H
#define VGRANGER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VgStatus {
  VG_STATUS_OK = 0,
  VG_STATUS_NULL_POINTER = 1,
  VG_STATUS_INVALID_ARGUMENT = 2,
  VG_STATUS_DATA = 3,
  VG_STATUS_IO = 4,
  /**
   * Training hit a non-finite value; the last good model is returned.
   */
  VG_STATUS_DIVERGED = 5,
  VG_STATUS_PANIC = 6,
} VgStatus;

typedef enum VgMethod {
  VG_METHOD_LINEAR = 0,
  VG_METHOD_NN_FTEST = 1,
  VG_METHOD_RF_R2 = 2,
} VgMethod;

/**
 * Which data-generating process `vg_bundle_generate` uses.
 */
typedef enum VgDgp {
  VG_DGP_NULL = 0,
  VG_DGP_CAUSAL = 1,
  /**
   * Seasonal stand-in; has a confounder but no proxies.
   */
  VG_DGP_STANDIN = 2,
} VgDgp;

typedef enum VgSeries {
  VG_SERIES_X = 0,
  VG_SERIES_Y = 1,
  VG_SERIES_P = 2,
  VG_SERIES_Z = 3,
} VgSeries;

/**
 * Opaque time-series bundle.
 */
typedef struct VgBundle VgBundle;

/**
 * Opaque trained model.
 */
typedef struct VgModel VgModel;

/**
 * Flat copy of a test result. `p_value` is NaN and the degrees of freedom
 * are 0 for tests without an F distribution.
 */
typedef struct VgGrangerResult {
  enum VgMethod method;
  double restricted;
  double full;
  double statistic;
  double p_value;
  size_t df_num;
  size_t df_den;
  size_t lag;
  size_t n;
  double alpha;
  bool reject;
} VgGrangerResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *vg_last_error(void);

/**
 * Generates a synthetic bundle; `dgp` is a [`VgDgp`] value.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum VgStatus vg_bundle_generate(int32_t dgp,
                                 size_t t,
                                 double ploss,
                                 size_t d_p,
                                 size_t d_z,
                                 uint64_t seed,
                                 struct VgBundle **out);

/**
 * Builds a bundle from caller arrays. `p` holds `d_p` columns and `z`
 * holds `d_z` columns (either may be null when its count is 0).
 *
 * # Safety
 * Each non-null array must hold the stated number of doubles; `out` must
 * be writable.
 */
enum VgStatus vg_bundle_from_arrays(const double *x,
                                    const double *y,
                                    size_t t,
                                    const double *p,
                                    size_t d_p,
                                    const double *z,
                                    size_t d_z,
                                    struct VgBundle **out);

/**
 * Reads a bundle CSV with columns `x, y[, p_*][, z_*][, w]`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VgStatus vg_bundle_load(const char *path, struct VgBundle **out);

/**
 * # Safety
 * `bundle` must be a live handle and `path` a NUL-terminated string.
 */
enum VgStatus vg_bundle_save(const struct VgBundle *bundle, const char *path);

/**
 * Releases a bundle; null is ignored.
 *
 * # Safety
 * `bundle` must be null or a handle not yet freed.
 */
void vg_bundle_free(struct VgBundle *bundle);

/**
 * Series length, 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
size_t vg_bundle_len(const struct VgBundle *bundle);

/**
 * Number of columns in a [`VgSeries`] family (1 for `x` and `y`), 0 for a
 * null handle or unknown family.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
size_t vg_bundle_columns(const struct VgBundle *bundle, int32_t which);

/**
 * Copies column `index` of a series family into `buf`, which must hold
 * exactly `len == vg_bundle_len(bundle)` doubles.
 *
 * # Safety
 * `bundle` must be a live handle and `buf` writable for `len` doubles.
 */
enum VgStatus vg_bundle_copy(const struct VgBundle *bundle,
                             int32_t which,
                             size_t index,
                             double *buf,
                             size_t len);

/**
 * Linear Granger F-test of `x -> y` given the conditioning columns.
 *
 * # Safety
 * `x`, `y` hold `t` doubles, `cond` holds `n_cond * t` doubles (or is
 * null when `n_cond == 0`), `out` is writable.
 */
enum VgStatus vg_linear_granger(const double *x,
                                const double *y,
                                size_t t,
                                const double *cond,
                                size_t n_cond,
                                size_t lag,
                                double alpha,
                                struct VgGrangerResult *out);

/**
 * Random-forest ΔR² Granger statistic; rejects when it is positive.
 *
 * # Safety
 * As for [`vg_linear_granger`].
 */
enum VgStatus vg_gc_r2(const double *x,
                       const double *y,
                       size_t t,
                       const double *cond,
                       size_t n_cond,
                       size_t lag,
                       size_t n_trees,
                       size_t max_depth,
                       size_t min_leaf,
                       uint64_t seed,
                       struct VgGrangerResult *out);

/**
 * Neural-network F-test of `x -> y`.
 *
 * # Safety
 * As for [`vg_linear_granger`].
 */
enum VgStatus vg_nn_granger(const double *x,
                            const double *y,
                            size_t t,
                            const double *cond,
                            size_t n_cond,
                            size_t lag,
                            size_t hidden,
                            size_t steps,
                            double lr,
                            uint64_t seed,
                            double alpha,
                            struct VgGrangerResult *out);

/**
 * CDF of the F distribution with `d1`, `d2` degrees of freedom.
 *
 * # Safety
 * `out` must be writable.
 */
enum VgStatus vg_f_cdf(double x, double d1, double d2, double *out);

/**
 * Trains a model on a bundle with proxies. `config_json` is a JSON object
 * of training settings (null for defaults). On [`VgStatus::Diverged`]
 * `*out` receives the last good model.
 *
 * # Safety
 * `bundle` must be a live handle, `config_json` null or NUL-terminated,
 * `out` writable.
 */
enum VgStatus vg_model_train(const struct VgBundle *bundle,
                             const char *config_json,
                             struct VgModel **out);

/**
 * Latent dimension, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vg_model_dz(const struct VgModel *model);

/**
 * Writes the posterior-mean confounder path, column-major, into `buf`,
 * which must hold `vg_model_dz(model) * vg_bundle_len(bundle)` doubles.
 *
 * # Safety
 * Handles must be live and `buf` writable for `len` doubles.
 */
enum VgStatus vg_model_estimate(const struct VgModel *model,
                                const struct VgBundle *bundle,
                                double *buf,
                                size_t len);

/**
 * Saves a checkpoint; a `.json` extension selects the JSON layout.
 *
 * # Safety
 * `model` must be a live handle and `path` NUL-terminated.
 */
enum VgStatus vg_model_save(const struct VgModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum VgStatus vg_model_load(const char *path, struct VgModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void vg_model_free(struct VgModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VGRANGER_H */
