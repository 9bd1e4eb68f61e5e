#ifndef BREX_H
#define BREX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define BREX_OK 0

#define BREX_NULL_POINTER 1

#define BREX_PARSE 2

#define BREX_DOMAIN 3

#define BREX_CALIBRATION 4

#define BREX_INVALID 5

#define BREX_IO 6

#define BREX_PANIC 7

#define BREX_FIDELITY_LS 0

#define BREX_FIDELITY_LR 1

#define BREX_FIDELITY_KL 2

#define BREX_CONSTRAINT_REALS 0

#define BREX_CONSTRAINT_NONNEG 1

#define BREX_STOP_TOLERANCE 0

#define BREX_STOP_MAX_ITER 1

#define BREX_STOP_DOMAIN_ERROR 2

// A validated problem `F_y(Ax) + λ0 ||x||_0 + (λ2/2) ||x||²` over a constraint set.
typedef struct BrexProblem BrexProblem;

// A calibrated relaxation of the `ℓ0` term.
typedef struct BrexRelaxation BrexRelaxation;

// Outcome of a solve, with its certificate.
typedef struct BrexResult BrexResult;

// Solver settings. Zero-initialized options select the defaults.
typedef struct {
  // Iteration cap; 0 selects 5000.
  size_t max_iter;
  // Relative stopping tolerance; 0 selects 1e-9.
  double rel_tol;
  // Step size when `fixed_step` is nonzero, otherwise the initial backtracking step
  // (0 selects the default).
  double rho;
  int32_t fixed_step;
  // Starting point of length N, or null for zero.
  const double *x0;
  // Certificate tolerance; 0 selects 1e-6.
  double cert_tol;
} BrexSolverOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty when none. Valid until the next failing
// call on the same thread.
const char *brex_last_error(void);

// Library version as a static NUL-terminated string.
const char *brex_version(void);

// Parses a JSON problem document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
int32_t brex_problem_from_json(const char *json, BrexProblem **out);

// Builds a problem from a row-major `m x n` matrix.
//
// `b` is the KL background and is ignored for the other data terms.
//
// # Safety
// `a` must hold `m * n` values, `y` must hold `m` values and `out` must be valid.
int32_t brex_problem_new(size_t m,
                         size_t n,
                         const double *a,
                         int32_t fidelity,
                         const double *y,
                         double b,
                         double lambda0,
                         double lambda2,
                         int32_t constraint,
                         BrexProblem **out);

// # Safety
// `p` must come from this library and not be used afterwards; null is ignored.
void brex_problem_free(BrexProblem *p);

// Number of unknowns, or 0 for a null handle.
//
// # Safety
// `p` must be null or a live handle.
size_t brex_problem_n(const BrexProblem *p);

// `J_0(x)`.
//
// # Safety
// `x` must hold `len` values and `out` must be valid.
int32_t brex_objective_j0(const BrexProblem *p, const double *x, size_t len, double *out);

// Calibrates a relaxation; `psi` and `gamma` use the command-line grammar, e.g. `"power:2"`
// and `"thr"`.
//
// # Safety
// String arguments must be NUL-terminated and `out` must be valid.
int32_t brex_calibrate(const BrexProblem *p,
                       const char *psi,
                       const char *gamma,
                       BrexRelaxation **out);

// # Safety
// `r` must come from this library and not be used afterwards; null is ignored.
void brex_relaxation_free(BrexRelaxation *r);

// Interval `[α⁻, α⁺]` of coordinate `n`; both are 0 for a plain `ℓ0` coordinate.
//
// # Safety
// `lo` and `hi` must be valid pointers.
int32_t brex_relaxation_alpha(const BrexRelaxation *r, size_t n, double *lo, double *hi);

// `B_Ψ(x)`.
//
// # Safety
// `x` must hold `len` values and `out` must be valid.
int32_t brex_relaxation_value(const BrexRelaxation *r, const double *x, size_t len, double *out);

// Proximal gradient descent on `J_Ψ`, or on `J_0` when `relaxation` is null. `options` may
// be null for the defaults.
//
// # Safety
// Handles must be live; `options.x0`, when set, must hold N values.
int32_t brex_solve(const BrexProblem *p,
                   const BrexRelaxation *relaxation,
                   const BrexSolverOptions *options,
                   BrexResult **out);

// # Safety
// `r` must come from this library and not be used afterwards; null is ignored.
void brex_result_free(BrexResult *r);

// Copies the solution into `out`, which must hold exactly N values.
//
// # Safety
// `out` must point to `len` writable doubles.
int32_t brex_result_x(const BrexResult *r, double *out, size_t len);

// # Safety
// `r` must be null or a live handle.
double brex_result_j0(const BrexResult *r);

// `J_Ψ` at the solution; equals `J_0` for unrelaxed solves.
//
// # Safety
// `r` must be null or a live handle.
double brex_result_jpsi(const BrexResult *r);

// # Safety
// `r` must be null or a live handle.
size_t brex_result_iterations(const BrexResult *r);

// One of the `BREX_STOP_*` codes, or -1 for a null handle.
//
// # Safety
// `r` must be null or a live handle.
int32_t brex_result_stop_reason(const BrexResult *r);

// Full result document (solution, objectives and certificate) as JSON. Release with
// `brex_string_free`.
//
// # Safety
// `out` must be valid.
int32_t brex_result_json(const BrexResult *r, char **out);

// All local minimizers of `J_0` with at most `max_support` nonzeros, as a JSON array sorted
// by objective. Release with `brex_string_free`.
//
// # Safety
// `out` must be valid.
int32_t brex_enumerate_json(const BrexProblem *p, size_t max_support, char **out);

// # Safety
// `s` must come from this library and not be used afterwards; null is ignored.
void brex_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BREX_H */
