#ifndef GDS_H
#define GDS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GdsBasisKind {
  GDS_BASIS_KIND_PIECEWISE = 0,
  GDS_BASIS_KIND_BSPLINE = 1,
} GdsBasisKind;

typedef enum GdsStatus {
  GDS_STATUS_OK = 0,
  GDS_STATUS_NULL_POINTER = 1,
  GDS_STATUS_INVALID_ARGUMENT = 2,
  GDS_STATUS_DIMENSION = 3,
  GDS_STATUS_NUMERICAL = 4,
  GDS_STATUS_IO = 5,
  GDS_STATUS_PANIC = 6,
  GDS_STATUS_BUFFER_TOO_SMALL = 7,
} GdsStatus;

typedef enum GdsVariant {
  GDS_VARIANT_JOINT = 0,
  GDS_VARIANT_SEPARABLE = 1,
} GdsVariant;

/**
 * Images on an evenly spaced midpoint grid with their responses.
 */
typedef struct GdsDataset GdsDataset;

typedef struct GdsModel GdsModel;

/**
 * Estimator settings. `order` and `knots` apply to B-splines only; a
 * nonpositive `refit_lambda` reuses `lambda`.
 */
typedef struct GdsFitOptions {
  enum GdsBasisKind basis;
  size_t p1;
  size_t p2;
  size_t order;
  size_t knots;
  enum GdsVariant variant;
  double w;
  double lambda;
  size_t d1;
  size_t d2;
  bool refit;
  double refit_lambda;
} GdsFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *gds_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gds_version(void);

/**
 * Options with a piecewise `m1 x m2` basis, joint variant, `w = 1`,
 * orders 0 and `lambda = 1`.
 */
struct GdsFitOptions gds_fit_options_default(size_t m1, size_t m2);

/**
 * Copies `n` images (row-major, `m1 * m2` values each, concatenated) and
 * `n` responses into a new dataset.
 *
 * # Safety
 * `images` must point to `n * m1 * m2` doubles, `y` to `n` doubles and
 * `out` to writable storage for one pointer.
 */
enum GdsStatus gds_dataset_new(size_t n,
                               size_t m1,
                               size_t m2,
                               const double *images,
                               const double *y,
                               struct GdsDataset **out);

/**
 * # Safety
 * `ds` must be null or a pointer from [`gds_dataset_new`] not yet freed.
 */
void gds_dataset_free(struct GdsDataset *ds);

/**
 * Fits the estimator (and the zero-set refit when requested).
 *
 * # Safety
 * `ds` must be a live dataset, `opts` must point to valid options and
 * `out` to writable storage for one pointer.
 */
enum GdsStatus gds_fit(const struct GdsDataset *ds,
                       const struct GdsFitOptions *opts,
                       struct GdsModel **out);

/**
 * # Safety
 * `model` must be null or a pointer from [`gds_fit`] not yet freed.
 */
void gds_model_free(struct GdsModel *model);

/**
 * # Safety
 * `model` must be live and `alpha` writable.
 */
enum GdsStatus gds_model_alpha(const struct GdsModel *model, double *alpha);

/**
 * Number of basis coefficients whose magnitude exceeds the zero threshold.
 *
 * # Safety
 * `model` must be live and `count` writable.
 */
enum GdsStatus gds_model_active_count(const struct GdsModel *model, size_t *count);

/**
 * Copies the basis coefficients. `needed` (optional) receives the count;
 * a short buffer yields `BufferTooSmall` with `needed` still set.
 *
 * # Safety
 * `buf` must have room for `len` doubles; `needed` may be null.
 */
enum GdsStatus gds_model_eta(const struct GdsModel *model, double *buf, size_t len, size_t *needed);

/**
 * Copies the truncated coefficient surface on the data grid, row-major.
 *
 * # Safety
 * As for [`gds_model_eta`].
 */
enum GdsStatus gds_model_surface(const struct GdsModel *model,
                                 double *buf,
                                 size_t len,
                                 size_t *needed);

/**
 * Predicts `n` new images laid out like [`gds_dataset_new`] input.
 *
 * # Safety
 * `images` must hold `n * m1 * m2` doubles for the model grid and `out`
 * room for `n` doubles.
 */
enum GdsStatus gds_model_predict(const struct GdsModel *model,
                                 size_t n,
                                 const double *images,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GDS_H */
