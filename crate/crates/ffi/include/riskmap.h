#ifndef RISKMAP_H
#define RISKMAP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_POINTER = 1,
  RM_STATUS_INVALID_ARGUMENT = 2,
  RM_STATUS_OUT_OF_RANGE = 3,
  RM_STATUS_INVALID_STATE = 4,
  RM_STATUS_OUT_OF_DOMAIN = 5,
  RM_STATUS_DEGENERATE_INPUT = 6,
  RM_STATUS_NUMERICAL = 7,
  RM_STATUS_DIVERGED = 8,
  RM_STATUS_INITIALIZATION = 9,
  RM_STATUS_DATA = 10,
  RM_STATUS_CONFIG = 11,
  RM_STATUS_IO = 12,
  RM_STATUS_BUFFER_TOO_SMALL = 13,
  RM_STATUS_PANIC = 14,
} RmStatus;

/**
 * Observed subjects.
 */
typedef struct RmDataset RmDataset;

/**
 * Posterior draws of a fitted model.
 */
typedef struct RmDraws RmDraws;

/**
 * A model ready for sampling.
 */
typedef struct RmModel RmModel;

/**
 * Kriged surfaces at prediction locations.
 */
typedef struct RmSurfaces RmSurfaces;

/**
 * Posterior summary of one scalar quantity.
 */
typedef struct RmSummary {
  double mean;
  double sd;
  double q025;
  double q50;
  double q975;
} RmSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * success. Valid until the next call into this library on the thread.
 */
const char *rm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rm_version(void);

/**
 * Builds a dataset from arrays. `x` is `n x p`, `coords` is `n x 2`; `w`
 * may be null. Event codes are `0` (censored) to `n_risks`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum RmStatus rm_dataset_new(size_t n,
                             const double *times,
                             const uint8_t *events,
                             size_t n_risks,
                             size_t p,
                             const double *x,
                             const double *w,
                             const double *coords,
                             struct RmDataset **out);

/**
 * Reads and standardizes a subject CSV (`id,time,event,[w],x1..,coord_x,coord_y`).
 * Coordinates are normalized when `normalize_coords` is true.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum RmStatus rm_dataset_read_csv(const char *path, bool normalize_coords, struct RmDataset **out);

/**
 * Simulates a study from the built-in two-risk design.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RmStatus rm_simulate(size_t n, uint64_t seed, double censoring, struct RmDataset **out);

/**
 * Number of subjects.
 *
 * # Safety
 * `data` must be a live handle or null.
 */
size_t rm_dataset_n(const struct RmDataset *data);

/**
 * # Safety
 * `data` must come from this library and not be used afterwards.
 */
void rm_dataset_free(struct RmDataset *data);

/**
 * Builds a model for `data`. `config_toml` uses the CLI configuration
 * format (`[model]`, `[hsgp]`, `[hyper]`); null means defaults. The
 * dataset is copied.
 *
 * # Safety
 * `data` must be a live handle; `config_toml` null or NUL-terminated.
 */
enum RmStatus rm_model_new(const struct RmDataset *data,
                           const char *config_toml,
                           struct RmModel **out);

/**
 * Dimension of the unconstrained parameter vector.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t rm_model_dim(const struct RmModel *model);

/**
 * Log posterior (including the change-of-variables term) at unconstrained
 * `u`; writes the gradient when `grad` is non-null.
 *
 * # Safety
 * `u` and `grad` must hold `len` values; `len` must equal the model dimension.
 */
enum RmStatus rm_model_log_posterior(const struct RmModel *model,
                                     const double *u,
                                     size_t len,
                                     double *grad,
                                     double *out_lp);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void rm_model_free(struct RmModel *model);

/**
 * Runs the sampler. `config_toml` supplies the `[sampler]` section (null
 * means defaults); `seed` is the master seed.
 *
 * # Safety
 * `model` must be a live handle; `config_toml` null or NUL-terminated.
 */
enum RmStatus rm_fit(const struct RmModel *model,
                     const char *config_toml,
                     uint64_t seed,
                     struct RmDraws **out);

/**
 * Number of stored parameters.
 *
 * # Safety
 * `draws` must be a live handle or null.
 */
size_t rm_draws_n_params(const struct RmDraws *draws);

/**
 * Retained draws over all chains.
 *
 * # Safety
 * `draws` must be a live handle or null.
 */
size_t rm_draws_total(const struct RmDraws *draws);

/**
 * Name of parameter `i`, owned by the handle; null when out of range.
 *
 * # Safety
 * `draws` must be a live handle or null.
 */
const char *rm_draws_param_name(const struct RmDraws *draws, size_t i);

/**
 * Copies the pooled draws (chain order) of a parameter or derived hazard
 * rate `lambda[j,l]` into `buf`, which must hold `rm_draws_total` values.
 *
 * # Safety
 * `name` NUL-terminated; `buf` valid for `len` values.
 */
enum RmStatus rm_draws_quantity(const struct RmDraws *draws,
                                const char *name,
                                double *buf,
                                size_t len);

/**
 * Summary of a quantity; with `exp_scale` draws are exponentiated first.
 *
 * # Safety
 * `name` NUL-terminated; `out` valid.
 */
enum RmStatus rm_draws_summary(const struct RmDraws *draws,
                               const char *name,
                               bool exp_scale,
                               struct RmSummary *out);

/**
 * WAIC with its log pointwise predictive density and effective number of
 * parameters. `lppd` and `p_waic` may be null.
 *
 * # Safety
 * Output pointers must be valid or null where allowed.
 */
enum RmStatus rm_draws_waic(const struct RmDraws *draws,
                            double *out_waic,
                            double *out_lppd,
                            double *out_p_waic);

/**
 * Largest split R-hat over parameters (NaN when every parameter is
 * constant) and the number of divergent post-warmup transitions.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum RmStatus rm_draws_diagnostics(const struct RmDraws *draws,
                                   double *out_max_rhat,
                                   size_t *out_divergences);

/**
 * # Safety
 * `draws` must come from this library and not be used afterwards.
 */
void rm_draws_free(struct RmDraws *draws);

/**
 * Kriges every spatial surface of `model` to `q` normalized locations
 * (`coords` is `q x 2`). Slopes are on the hazard-ratio scale.
 *
 * # Safety
 * Handles must be live and belong together; `coords` holds `2q` values.
 */
enum RmStatus rm_krige(const struct RmModel *model,
                       const struct RmDraws *draws,
                       const double *coords,
                       size_t q,
                       uint64_t seed,
                       struct RmSurfaces **out);

/**
 * Number of kriged surfaces.
 *
 * # Safety
 * `s` must be a live handle or null.
 */
size_t rm_surfaces_count(const struct RmSurfaces *s);

/**
 * Describes surface `i`: `is_slope` (0 intercept, 1 slope), 1-based
 * `risk`, and draw and location counts.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum RmStatus rm_surfaces_info(const struct RmSurfaces *s,
                               size_t i,
                               bool *is_slope,
                               size_t *risk,
                               size_t *n_draws,
                               size_t *n_locations);

/**
 * Copies the draws × locations matrix of surface `i` into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` values.
 */
enum RmStatus rm_surfaces_copy(const struct RmSurfaces *s, size_t i, double *buf, size_t len);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void rm_surfaces_free(struct RmSurfaces *s);

/**
 * K-means clustering of an `s x q` draw matrix. Writes 1-based `labels`
 * (length `q`), ascending `centers` (length `k`), optionally assignment
 * probabilities (`q x k`, may be null) and the expected loss.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum RmStatus rm_cluster(const double *draws,
                         size_t s,
                         size_t q,
                         size_t k,
                         size_t restarts,
                         uint64_t seed,
                         uint32_t *labels,
                         double *centers,
                         double *probs,
                         double *loss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKMAP_H */
