#ifndef VCSPLINE_H
#define VCSPLINE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every entry point.
typedef enum VcsStatus {
  VCS_STATUS_OK = 0,
  VCS_STATUS_NULL_POINTER = 1,
  VCS_STATUS_INVALID_INPUT = 2,
  VCS_STATUS_DIMENSION_MISMATCH = 3,
  // Too few observations for the requested model, or a degenerate fit.
  VCS_STATUS_NUMERICAL = 4,
  // Malformed JSON or other serialization failure.
  VCS_STATUS_DATA = 5,
  VCS_STATUS_PANIC = 6,
} VcsStatus;

// Knot candidate set for the segmentation.
typedef enum VcsGrid {
  VCS_GRID_AUTO = 0,
  VCS_GRID_ON = 1,
  VCS_GRID_OFF = 2,
} VcsGrid;

// Observations `(x, u, y)`.
typedef struct VcsDataset VcsDataset;

// A fitted varying-coefficient model.
typedef struct VcsFit VcsFit;

// Fit settings; initialize with `vcs_fit_options_default`.
typedef struct VcsFitOptions {
  uint32_t degree;
  // Segments hold at least `n^alpha` rows.
  double alpha;
  // Segmentation penalties: `lambda0_points` log-spaced on `[lo, hi]`.
  double lambda0_lo;
  double lambda0_hi;
  uint32_t lambda0_points;
  // A `VcsGrid` value.
  uint32_t grid;
  // Sweep cap of the two-step search.
  uint32_t max_sweeps;
  // Nonzero for per-predictor knots, zero for one shared knot set.
  uint8_t two_step;
} VcsFitOptions;

// Scalar summary of a fit.
typedef struct VcsFitSummary {
  size_t n;
  size_t p;
  uint32_t degree;
  size_t total_knots;
  double rss;
  double bic;
} VcsFitSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next failing call on the same thread.
const char *vcs_last_error(void);

// Copies `n` rows of row-major `x` (`n x p`), `u` and `y` into a new dataset.
//
// # Safety
// `x` must be valid for `n * p` reads, `u` and `y` for `n` reads, and `out`
// for one write.
enum VcsStatus vcs_dataset_new(const double *x,
                               const double *u,
                               const double *y,
                               size_t n,
                               size_t p,
                               struct VcsDataset **out);

// Releases a dataset; null is ignored.
//
// # Safety
// `ds` must be null or a handle from `vcs_dataset_new` not yet freed.
void vcs_dataset_free(struct VcsDataset *ds);

// Writes the library defaults to `out`.
//
// # Safety
// `out` must be valid for one write.
enum VcsStatus vcs_fit_options_default(struct VcsFitOptions *out);

// Fits a model; `opts` may be null for the defaults.
//
// # Safety
// `ds` must be a live dataset handle, `opts` null or valid for one read,
// and `out` valid for one write.
enum VcsStatus vcs_fit(const struct VcsDataset *ds,
                       const struct VcsFitOptions *opts,
                       struct VcsFit **out);

// Releases a fit; null is ignored.
//
// # Safety
// `fit` must be null or a live fit handle.
void vcs_fit_free(struct VcsFit *fit);

// # Safety
// `fit` must be a live fit handle and `out` valid for one write.
enum VcsStatus vcs_fit_summary(const struct VcsFit *fit, struct VcsFitSummary *out);

// Copies predictor `j`'s knots into `buf` (capacity `cap`) and stores their
// count in `count`. With `buf` null only the count is written.
//
// # Safety
// `fit` must be a live fit handle, `count` valid for one write, and `buf`
// null or valid for `cap` writes.
enum VcsStatus vcs_fit_knots(const struct VcsFit *fit,
                             size_t j,
                             double *buf,
                             size_t cap,
                             size_t *count);

// `beta_j(u_i)` into row-major `out` (`n_u x p`).
//
// # Safety
// `fit` must be a live fit handle, `u` valid for `n_u` reads and `out` for
// `n_u * p` writes.
enum VcsStatus vcs_fit_eval(const struct VcsFit *fit, const double *u, size_t n_u, double *out);

// Predictions for `n` new rows of row-major `x` (`n x p`) at `u`.
//
// # Safety
// `fit` must be a live fit handle, `x` valid for `n * p` reads, `u` for `n`
// reads and `out` for `n` writes.
enum VcsStatus vcs_fit_predict(const struct VcsFit *fit,
                               const double *x,
                               const double *u,
                               size_t n,
                               double *out);

// Model JSON; release the string with `vcs_string_free`.
//
// # Safety
// `fit` must be a live fit handle and `out` valid for one write.
enum VcsStatus vcs_fit_to_json(const struct VcsFit *fit, char **out);

// Loads a fit from model JSON.
//
// # Safety
// `json` must be a NUL-terminated string and `out` valid for one write.
enum VcsStatus vcs_fit_from_json(const char *json, struct VcsFit **out);

// Runs predictor selection with default settings and returns the selection
// report as JSON; release it with `vcs_string_free`.
//
// # Safety
// `ds` must be a live dataset handle and `out` valid for one write.
enum VcsStatus vcs_select(const struct VcsDataset *ds, char **out);

// Releases a string returned by this library; null is ignored.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void vcs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VCSPLINE_H */
