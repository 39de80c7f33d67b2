#ifndef RSLAB_H
#define RSLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum RslabStatus {
  RSLAB_STATUS_OK = 0,
  RSLAB_STATUS_NULL_POINTER = 1,
  RSLAB_STATUS_DOMAIN = 2,
  RSLAB_STATUS_INPUT = 3,
  RSLAB_STATUS_PRECONDITION = 4,
  RSLAB_STATUS_REGIME = 5,
  RSLAB_STATUS_ACCURACY = 6,
  RSLAB_STATUS_POSITIVITY = 7,
  RSLAB_STATUS_INTERNAL = 8,
  RSLAB_STATUS_CONFIG = 9,
  RSLAB_STATUS_IO = 10,
  RSLAB_STATUS_PANIC = 11,
  RSLAB_STATUS_UTF8 = 12,
} RslabStatus;

/*
 Sweep point classification.
 */
typedef enum RslabSweepStatus {
  RSLAB_SWEEP_STATUS_GLOBAL = 0,
  RSLAB_SWEEP_STATUS_BLEW_UP = 1,
  RSLAB_SWEEP_STATUS_INCONCLUSIVE = 2,
} RslabSweepStatus;

/*
 Run configuration.
 */
typedef struct RslabConfig RslabConfig;

/*
 Sampled relaxation function.
 */
typedef struct RslabCurve RslabCurve;

/*
 Fractional parameters (α, k).
 */
typedef struct RslabParams RslabParams;

/*
 Result of a dichotomy sweep.
 */
typedef struct RslabSweep RslabSweep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next rslab call on the same thread.
 */
const char *rslab_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *rslab_version(void);

/*
 Releases a string returned by this library.

 # Safety
 `s` must come from an rslab function returning `char *` and must not be
 used afterwards. Null is ignored.
 */
void rslab_string_free(char *s);

/*
 Creates (α, k) with α in (0, 1) and k ≥ 0.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum RslabStatus rslab_params_new(double alpha, double k, struct RslabParams **out);

/*
 # Safety
 `p` must be null or a handle from [`rslab_params_new`], not yet freed.
 */
void rslab_params_free(struct RslabParams *p);

/*
 Solves the relaxation equation for eigenvalue `mu` on a graded mesh of
 `intervals` panels over [0, t_end].

 # Safety
 `params` must be a live handle and `out` writable.
 */
enum RslabStatus rslab_relax_volterra(const struct RslabParams *params,
                                      double mu,
                                      double t_end,
                                      size_t intervals,
                                      double grading,
                                      struct RslabCurve **out);

/*
 s(t, μ) at a single t > 0 by contour quadrature with default contour.

 # Safety
 `params` must be a live handle and `out` writable.
 */
enum RslabStatus rslab_relax_contour(const struct RslabParams *params,
                                     double mu,
                                     double t,
                                     double *out);

/*
 Number of nodes in the curve; 0 for null.

 # Safety
 `curve` must be null or a live handle.
 */
size_t rslab_curve_len(const struct RslabCurve *curve);

/*
 Copies up to `len` node times and values into `times` and `values`
 (either may be null to skip it).

 # Safety
 Non-null buffers must hold `len` doubles.
 */
enum RslabStatus rslab_curve_copy(const struct RslabCurve *curve,
                                  double *times,
                                  double *values,
                                  size_t len);

/*
 # Safety
 `curve` must be null or a live handle, not used afterwards.
 */
void rslab_curve_free(struct RslabCurve *curve);

/*
 ρ_c = 1 + (σ + 2(γ+1))/N.

 # Safety
 `out` must be writable.
 */
enum RslabStatus rslab_critical_exponent(size_t dim, double sigma, double gamma, double *out);

/*
 Critical product (ρ₁ρ₂)_c for the system.

 # Safety
 `out` must be writable.
 */
enum RslabStatus rslab_critical_product(size_t dim,
                                        double sigma,
                                        double gamma,
                                        double rho1,
                                        double rho2,
                                        double *out);

/*
 Default configuration.

 # Safety
 `out` must be writable.
 */
enum RslabStatus rslab_config_default(struct RslabConfig **out);

/*
 Parses a `key = value` document.

 # Safety
 `text` must be NUL-terminated and `out` writable.
 */
enum RslabStatus rslab_config_parse(const char *text_ptr, struct RslabConfig **out);

/*
 Sets one key and revalidates; the config is unchanged on failure.

 # Safety
 `cfg` must be a live handle; `key` and `value` NUL-terminated.
 */
enum RslabStatus rslab_config_set(struct RslabConfig *cfg, const char *key, const char *value);

/*
 Canonical text form; release with [`rslab_string_free`]. Null on null input.

 # Safety
 `cfg` must be null or a live handle.
 */
char *rslab_config_to_text(const struct RslabConfig *cfg);

/*
 SHA-256 of the canonical text, hex; release with [`rslab_string_free`].

 # Safety
 `cfg` must be null or a live handle.
 */
char *rslab_config_hash(const struct RslabConfig *cfg);

/*
 # Safety
 `cfg` must be null or a live handle, not used afterwards.
 */
void rslab_config_free(struct RslabConfig *cfg);

/*
 Runs the dichotomy sweep described by `cfg`.

 # Safety
 `cfg` must be a live handle and `out` writable.
 */
enum RslabStatus rslab_sweep_run(const struct RslabConfig *cfg, struct RslabSweep **out);

/*
 Number of sweep points; 0 for null.

 # Safety
 `sweep` must be null or a live handle.
 */
size_t rslab_sweep_len(const struct RslabSweep *sweep);

/*
 Axis value and classification of point `index`.

 # Safety
 `sweep` must be a live handle; `value` and `status` writable.
 */
enum RslabStatus rslab_sweep_point(const struct RslabSweep *sweep,
                                   size_t index,
                                   double *value,
                                   enum RslabSweepStatus *status);

/*
 Full report as JSON; release with [`rslab_string_free`]. Null on null input.

 # Safety
 `sweep` must be null or a live handle.
 */
char *rslab_sweep_json(const struct RslabSweep *sweep);

/*
 # Safety
 `sweep` must be null or a live handle, not used afterwards.
 */
void rslab_sweep_free(struct RslabSweep *sweep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSLAB_H */
