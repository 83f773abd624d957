#ifndef PYRAMID_H
#define PYRAMID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Hull labels for [`pyramid_region_contains`].
 */
typedef enum PyramidHull {
  PYRAMID_HULL_BANACH = 0,
  PYRAMID_HULL_THM1_S = 1,
  PYRAMID_HULL_SEC10_S = 2,
  PYRAMID_HULL_SEC10_SPRIME = 3,
} PyramidHull;

typedef enum PyramidStatus {
  PYRAMID_STATUS_OK = 0,
  PYRAMID_STATUS_INVALID_ARGUMENT = 1,
  PYRAMID_STATUS_NON_FINITE = 2,
  PYRAMID_STATUS_DEGENERATE_FRAME = 3,
  PYRAMID_STATUS_BUDGET_EXCEEDED = 4,
  PYRAMID_STATUS_NON_FINITE_SAMPLE = 5,
  PYRAMID_STATUS_UNDERPOWERED = 6,
  PYRAMID_STATUS_NULL_POINTER = 7,
  PYRAMID_STATUS_PANIC = 8,
} PyramidStatus;

/*
 A test function on `ℝ^d`.
 */
typedef struct PyramidFunction PyramidFunction;

/*
 A frequency triple `(ξ, δ, η)` in `ℝ^d × ℝ^d × ℝ^d`.
 */
typedef struct PyramidTriple PyramidTriple;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread; valid until the next call
 that fails. Never null.
 */
const char *pyramid_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *pyramid_version(void);

/*
 Creates a triple from three arrays of `d` doubles each; `d >= 4`.

 # Safety
 `xi`, `delta` and `eta` must each point to `d` readable doubles; `out`
 must be writable.
 */
enum PyramidStatus pyramid_triple_new(uintptr_t d,
                                      const double *xi,
                                      const double *delta,
                                      const double *eta,
                                      struct PyramidTriple **out_triple);

/*
 Releases a triple. Null is ignored.

 # Safety
 `triple` must come from [`pyramid_triple_new`] and not be used again.
 */
void pyramid_triple_free(struct PyramidTriple *triple);

/*
 Monte Carlo multiplier over `n` Haar samples from stream `(seed, stream)`.

 # Safety
 `triple` must be a live handle; out pointers must be writable.
 */
enum PyramidStatus pyramid_multiplier_mc(const struct PyramidTriple *triple,
                                         uintptr_t n,
                                         uint64_t seed,
                                         uint64_t stream,
                                         double *out_re,
                                         double *out_im,
                                         double *out_stderr);

/*
 Deterministic reduced multiplier with `nodes` Gauss–Legendre nodes per
 axis before oscillation scaling. The value is real.

 # Safety
 `triple` must be a live handle; `out_value` must be writable.
 */
enum PyramidStatus pyramid_multiplier_reduced(const struct PyramidTriple *triple,
                                              uintptr_t nodes,
                                              double *out_value);

/*
 Hybrid multiplier: `n_rot` rotation samples around a quadrature inner
 integral.

 # Safety
 `triple` must be a live handle; out pointers must be writable.
 */
enum PyramidStatus pyramid_multiplier_hybrid(const struct PyramidTriple *triple,
                                             uintptr_t n_rot,
                                             uintptr_t nodes,
                                             uint64_t seed,
                                             uint64_t stream,
                                             double *out_value,
                                             double *out_stderr);

/*
 The decay envelope at `triple`.

 # Safety
 `triple` must be a live handle; `out_value` must be writable.
 */
enum PyramidStatus pyramid_decay_bound(const struct PyramidTriple *triple, double *out_value);

/*
 Fourier transform of the normalized surface measure of `𝕊^n` at radius
 `a`.

 # Safety
 `out_value` must be writable.
 */
enum PyramidStatus pyramid_sphere_ft(uint32_t n, double a, double *out_value);

/*
 `p₀(d)` as a reduced fraction.

 # Safety
 Out pointers must be writable.
 */
enum PyramidStatus pyramid_p0(uint32_t d, int64_t *out_num, int64_t *out_den);

/*
 Exact membership of `(num[k]/den[k])ₖ` in the closed hull `label` at
 dimension `d`. Writes 1 for inside, 0 for outside.

 # Safety
 `num` and `den` must point to three readable values; `out_inside` must
 be writable.
 */
enum PyramidStatus pyramid_region_contains(enum PyramidHull label,
                                           uint32_t d,
                                           const int64_t *num,
                                           const int64_t *den,
                                           int32_t *out_inside);

/*
 Witness `5d/(2d−8)` of the centre's exclusion from `sec10_S`, checked
 against the exact feasibility program.

 # Safety
 Out pointers must be writable.
 */
enum PyramidStatus pyramid_exclusion_witness(uint32_t d, int64_t *out_num, int64_t *out_den);

/*
 Per-level L² exponent at dimension `d` as a reduced fraction.

 # Safety
 Out pointers must be writable.
 */
enum PyramidStatus pyramid_l2_exponent(uint32_t d, int64_t *out_num, int64_t *out_den);

/*
 Least dimension with a summable per-level L² exponent.

 # Safety
 `out_dim` must be writable.
 */
enum PyramidStatus pyramid_l2_threshold(uint32_t *out_dim);

/*
 `exp(−π|x−c|²/w²)` with center `c` of length `d`.

 # Safety
 `center` must point to `d` readable doubles; `out_fn` must be writable.
 */
enum PyramidStatus pyramid_function_gaussian(uintptr_t d,
                                             const double *center,
                                             double width,
                                             struct PyramidFunction **out_fn);

/*
 Indicator of the closed ball of `radius` about `center`.

 # Safety
 `center` must point to `d` readable doubles; `out_fn` must be writable.
 */
enum PyramidStatus pyramid_function_ball(uintptr_t d,
                                         const double *center,
                                         double radius,
                                         struct PyramidFunction **out_fn);

/*
 Releases a test function. Null is ignored.

 # Safety
 `f` must come from a `pyramid_function_*` constructor and not be used
 again.
 */
void pyramid_function_free(struct PyramidFunction *f);

/*
 `T(f,g,h)(x)` by Monte Carlo over `n` manifold samples.

 # Safety
 Handles must be live; `x` must point to `d` readable doubles where `d`
 is the functions' dimension; out pointers must be writable.
 */
enum PyramidStatus pyramid_apply(const struct PyramidFunction *f,
                                 const struct PyramidFunction *g,
                                 const struct PyramidFunction *h,
                                 const double *x,
                                 uintptr_t n,
                                 uint64_t seed,
                                 uint64_t stream,
                                 double *out_value,
                                 double *out_stderr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PYRAMID_H */
