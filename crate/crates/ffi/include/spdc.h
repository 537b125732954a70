#ifndef SPDC_H
#define SPDC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpdcFilterShape {
  SPDC_FILTER_SHAPE_NONE = 0,
  SPDC_FILTER_SHAPE_GAUSSIAN = 1,
  SPDC_FILTER_SHAPE_RECT = 2,
} SpdcFilterShape;

typedef enum SpdcPmShape {
  SPDC_PM_SHAPE_SINC = 0,
  SPDC_PM_SHAPE_APODIZED = 1,
} SpdcPmShape;

// Result code of every fallible call.
typedef enum SpdcStatus {
  SPDC_STATUS_OK = 0,
  SPDC_STATUS_NULL_POINTER = 1,
  SPDC_STATUS_INVALID_ARGUMENT = 2,
  SPDC_STATUS_UNKNOWN_CRYSTAL = 3,
  SPDC_STATUS_OUT_OF_RANGE = 4,
  SPDC_STATUS_NO_ROOT = 5,
  SPDC_STATUS_INFEASIBLE = 6,
  SPDC_STATUS_NON_FINITE = 7,
  SPDC_STATUS_RESOURCE = 8,
  SPDC_STATUS_UNSUPPORTED = 9,
  SPDC_STATUS_IO = 10,
  SPDC_STATUS_PANIC = 11,
} SpdcStatus;

// Crystal catalog handle.
typedef struct SpdcCatalog SpdcCatalog;

// A crystal at its operating point on a fixed grid, ready for evaluation.
typedef struct SpdcSource SpdcSource;

typedef struct SpdcMetrics {
  double purity;
  double transmission;
  double alpha;
  uint32_t k_max;
  double purity_unfiltered;
} SpdcMetrics;

typedef struct SpdcOptimum {
  double length_mm;
  double pump_fwhm_nm;
  struct SpdcMetrics metrics;
  uint32_t evaluations;
  bool converged;
} SpdcOptimum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *spdc_last_error_message(void);

// Static name of a status code.
const char *spdc_status_name(enum SpdcStatus status);

// Loads the built-in catalog (or `SPDC_CATALOG_DIR` when set).
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum SpdcStatus spdc_catalog_load(struct SpdcCatalog **out);

// Loads every `*.json` crystal in `dir`.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` valid writable storage.
enum SpdcStatus spdc_catalog_from_dir(const char *dir, struct SpdcCatalog **out);

// # Safety
// `catalog` must be NULL or a handle from `spdc_catalog_*` not yet freed.
void spdc_catalog_free(struct SpdcCatalog *catalog);

// Number of crystals in the catalog, 0 for NULL.
//
// # Safety
// `catalog` must be NULL or a live handle.
size_t spdc_catalog_len(const struct SpdcCatalog *catalog);

// Degenerate centre wavelength (nm) satisfying the crystal's GVM condition.
//
// # Safety
// `catalog` must be a live handle, `name` NUL-terminated, `out_nm` writable.
enum SpdcStatus spdc_gvm_center(const struct SpdcCatalog *catalog,
                                const char *name,
                                double *out_nm);

// Prepares `name` on its default wavelength window with `grid_points` per
// axis (0 picks the crystal's production size). Fails with
// `SPDC_STATUS_RESOURCE` when the grid would exceed the default memory cap.
//
// # Safety
// `catalog` must be a live handle, `name` NUL-terminated, `out` writable.
enum SpdcStatus spdc_source_new(const struct SpdcCatalog *catalog,
                                const char *name,
                                enum SpdcPmShape pm_shape,
                                size_t grid_points,
                                struct SpdcSource **out);

// # Safety
// `source` must be NULL or a handle from `spdc_source_new` not yet freed.
void spdc_source_free(struct SpdcSource *source);

// Degenerate centre wavelength (nm) of the prepared source.
//
// # Safety
// `source` must be a live handle and `out_nm` writable.
enum SpdcStatus spdc_source_center_nm(const struct SpdcSource *source, double *out_nm);

// Scores one (length, pump bandwidth) point with a herald filter centred on
// the degenerate wavelength. `error_bound` is the per-stage error budget.
//
// # Safety
// `source` must be a live handle and `out_metrics` writable.
enum SpdcStatus spdc_source_evaluate(const struct SpdcSource *source,
                                     double length_mm,
                                     double pump_fwhm_nm,
                                     enum SpdcFilterShape filter,
                                     double filter_fwhm_nm,
                                     double error_bound,
                                     struct SpdcMetrics *out_metrics);

// Maximises the source quality over the crystal's (length, pump bandwidth)
// box, starting from its midpoint.
//
// # Safety
// `source` must be a live handle and `out_optimum` writable.
enum SpdcStatus spdc_source_maximize(const struct SpdcSource *source,
                                     enum SpdcFilterShape filter,
                                     double filter_fwhm_nm,
                                     double error_bound,
                                     struct SpdcOptimum *out_optimum);

// Largest network depth `k` a source of quality `alpha` supports at `error_bound`.
//
// # Safety
// `out_k` must be writable.
enum SpdcStatus spdc_k_star(double alpha, double error_bound, uint32_t *out_k);

// Smallest quality supporting depth `k` at `error_bound`.
//
// # Safety
// `out_alpha` must be writable.
enum SpdcStatus spdc_alpha_required(uint32_t k, double error_bound, double *out_alpha);

// Transmission budget left for the rest of the network. Returns
// `SPDC_STATUS_INFEASIBLE` when `alpha_opt < alpha_req`.
//
// # Safety
// `out_eta` must be writable.
enum SpdcStatus spdc_transmission_budget(double alpha_opt, double alpha_req, double *out_eta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPDC_H */
