#ifndef GFN_H
#define GFN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum GfnStatus {
  GFN_STATUS_OK = 0,
  GFN_STATUS_NULL_POINTER = 1,
  GFN_STATUS_INVALID_ARGUMENT = 2,
  GFN_STATUS_DOMAIN = 3,
  GFN_STATUS_ILL_CONDITIONED = 4,
  GFN_STATUS_UNKNOWN_NAME = 5,
  GFN_STATUS_CONFIG = 6,
  GFN_STATUS_IO = 7,
  GFN_STATUS_NUMERICAL = 8,
  GFN_STATUS_PANIC = 9,
} GfnStatus;

// Opaque diffeomorphism.
typedef struct GfnDiffeo GfnDiffeo;

// Opaque distribution.
typedef struct GfnDistribution GfnDistribution;

// Opaque representative on the basic space.
typedef struct GfnRepresentative GfnRepresentative;

// Opaque test function.
typedef struct GfnTestFunction GfnTestFunction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gfn_version(void);

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len - 1` bytes) and returns the full message length. Pass a
// null `buf` to query the length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t gfn_last_error_message(char *buf, uintptr_t len);

// Mollifier of order `q` (unit mass, vanishing moments `1..=q` about the
// origin) supported in `[center - radius, center + radius]`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum GfnStatus gfn_mollifier_new(uint32_t q,
                                 double radius,
                                 double center,
                                 struct GfnTestFunction **out);

// `eps^-1 phi(x / eps)` as a new handle.
//
// # Safety
// `phi` must be a live handle and `out` a valid handle slot.
enum GfnStatus gfn_test_function_scale(const struct GfnTestFunction *phi,
                                       double eps,
                                       struct GfnTestFunction **out);

// # Safety
// `phi` must be a live handle and `out` valid.
enum GfnStatus gfn_test_function_eval(const struct GfnTestFunction *phi, double x, double *out);

// `int x^k phi(x) dx` by quadrature.
//
// # Safety
// `phi` must be a live handle and `out` valid.
enum GfnStatus gfn_test_function_moment(const struct GfnTestFunction *phi, uint32_t k, double *out);

// # Safety
// `phi` must be null or a handle not yet freed.
void gfn_test_function_free(struct GfnTestFunction *phi);

// Dirac delta at `position`.
//
// # Safety
// `out` must be a valid handle slot.
enum GfnStatus gfn_distribution_dirac(double position, struct GfnDistribution **out);

// Heaviside step.
//
// # Safety
// `out` must be a valid handle slot.
enum GfnStatus gfn_distribution_heaviside(struct GfnDistribution **out);

// Principal value of `1/x`.
//
// # Safety
// `out` must be a valid handle slot.
enum GfnStatus gfn_distribution_principal_value(struct GfnDistribution **out);

// The smooth density `x^k`.
//
// # Safety
// `out` must be a valid handle slot.
enum GfnStatus gfn_distribution_power(uint32_t k, struct GfnDistribution **out);

// The smooth density `sin x`.
//
// # Safety
// `out` must be a valid handle slot.
enum GfnStatus gfn_distribution_sin(struct GfnDistribution **out);

// Distributional derivative as a new handle.
//
// # Safety
// `u` must be a live handle and `out` a valid handle slot.
enum GfnStatus gfn_distribution_derivative(const struct GfnDistribution *u,
                                           struct GfnDistribution **out);

// `<u, psi>`, split into real and imaginary parts.
//
// # Safety
// `u` and `psi` must be live handles; `re` and `im` valid.
enum GfnStatus gfn_distribution_pair(const struct GfnDistribution *u,
                                     const struct GfnTestFunction *psi,
                                     double *re,
                                     double *im);

// # Safety
// `u` must be null or a handle not yet freed.
void gfn_distribution_free(struct GfnDistribution *u);

// Embedding of `u` in the C-formalism.
//
// # Safety
// `u` must be a live handle and `out` a valid handle slot.
enum GfnStatus gfn_embed_c(const struct GfnDistribution *u, struct GfnRepresentative **out);

// Embedding of `u` in the J-formalism.
//
// # Safety
// `u` must be a live handle and `out` a valid handle slot.
enum GfnStatus gfn_embed_j(const struct GfnDistribution *u, struct GfnRepresentative **out);

// Pointwise difference `a - b`.
//
// # Safety
// `a` and `b` must be live handles and `out` a valid handle slot.
enum GfnStatus gfn_representative_sub(const struct GfnRepresentative *a,
                                      const struct GfnRepresentative *b,
                                      struct GfnRepresentative **out);

// Pointwise product `a * b`.
//
// # Safety
// `a` and `b` must be live handles and `out` a valid handle slot.
enum GfnStatus gfn_representative_mul(const struct GfnRepresentative *a,
                                      const struct GfnRepresentative *b,
                                      struct GfnRepresentative **out);

// `R(phi, x)`, split into real and imaginary parts.
//
// # Safety
// `r` and `phi` must be live handles; `re` and `im` valid.
enum GfnStatus gfn_representative_eval(const struct GfnRepresentative *r,
                                       const struct GfnTestFunction *phi,
                                       double x,
                                       double *re,
                                       double *im);

// # Safety
// `r` must be null or a handle not yet freed.
void gfn_representative_free(struct GfnRepresentative *r);

// Looks up a catalog diffeomorphism (`id`, `scale2`, `shift1`, `sine`,
// `cubic`, `affine:A:B`, `sine:A:B`, `cubic:C`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid handle slot.
enum GfnStatus gfn_diffeo_catalog(const char *name, struct GfnDiffeo **out);

// # Safety
// `map` must be a live handle and `out` valid.
enum GfnStatus gfn_diffeo_forward(const struct GfnDiffeo *map, double x, double *out);

// # Safety
// `map` must be a live handle and `out` valid.
enum GfnStatus gfn_diffeo_inverse(const struct GfnDiffeo *map, double y, double *out);

// Pullback of a representative along `map`.
//
// # Safety
// `map` and `r` must be live handles and `out` a valid handle slot.
enum GfnStatus gfn_pullback(const struct GfnDiffeo *map,
                            const struct GfnRepresentative *r,
                            struct GfnRepresentative **out);

// # Safety
// `map` must be null or a handle not yet freed.
void gfn_diffeo_free(struct GfnDiffeo *map);

// Runs a named scenario with default settings and the given seed, writing
// its CSV files into `out_dir`. `passed` receives 1 if every scenario
// assertion held, 0 otherwise.
//
// # Safety
// `scenario` and `out_dir` must be NUL-terminated strings; `passed` valid.
enum GfnStatus gfn_run_scenario(const char *scenario,
                                const char *out_dir,
                                uint64_t seed,
                                int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFN_H */
