#ifndef NHSYK_H
#define NHSYK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes shared by every entry point.
 */
typedef enum NhsykStatus {
  NHSYK_STATUS_OK = 0,
  NHSYK_STATUS_NULL_POINTER = 1,
  NHSYK_STATUS_DOMAIN = 2,
  NHSYK_STATUS_CONFIG = 3,
  NHSYK_STATUS_NO_CONVERGENCE = 4,
  NHSYK_STATUS_SINGULAR = 5,
  NHSYK_STATUS_IO = 6,
  NHSYK_STATUS_BUFFER_TOO_SMALL = 7,
  NHSYK_STATUS_PANIC = 8,
} NhsykStatus;

typedef enum NhsykPhase {
  NHSYK_PHASE_AREA_LAW = 0,
  NHSYK_PHASE_CRITICAL = 1,
  NHSYK_PHASE_VOLUME_LAW = 2,
} NhsykPhase;

typedef enum NhsykTransition {
  NHSYK_TRANSITION_CONTINUOUS = 0,
  NHSYK_TRANSITION_FIRST_ORDER = 1,
  NHSYK_TRANSITION_NOT_AT_BOUNDARY = 2,
} NhsykTransition;

/**
 * Model parameters. Opaque to C.
 */
typedef struct NhsykModel NhsykModel;

/**
 * A converged saddle. Opaque to C.
 */
typedef struct NhsykSolution NhsykSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated).
 * `needed` receives the buffer size required, including the terminator.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null when `len` is 0.
 */
enum NhsykStatus nhsyk_last_error(char *buf, size_t len, size_t *needed);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nhsyk_version(void);

/**
 * Creates a model handle; `l` must be even.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum NhsykStatus nhsyk_model_new(double j,
                                 double v,
                                 double zeta,
                                 double mu,
                                 size_t l,
                                 double t,
                                 struct NhsykModel **out);

/**
 * # Safety
 * `model` must come from [`nhsyk_model_new`] and not be freed twice.
 */
void nhsyk_model_free(struct NhsykModel *model);

/**
 * Closed-form saddle `(P, S, z)`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NhsykStatus nhsyk_solve_saddle(const struct NhsykModel *model,
                                    double *p,
                                    double *s,
                                    double *z);

/**
 * # Safety
 * All pointers must be valid.
 */
enum NhsykStatus nhsyk_classify_phase(const struct NhsykModel *model,
                                      enum NhsykPhase *kind,
                                      enum NhsykTransition *order);

/**
 * `L sin(pi |A| / L) / pi`.
 *
 * # Safety
 * `out` must be valid.
 */
enum NhsykStatus nhsyk_chord_length(size_t a_size, size_t l, double *out);

/**
 * Solves the saddle-point equations directly at twist `phi` on `A = {1..a_size}`
 * with default solver options and `n_t` time steps.
 *
 * # Safety
 * `model` and `out` must be valid.
 */
enum NhsykStatus nhsyk_solve(const struct NhsykModel *model,
                             size_t n_t,
                             double phi,
                             size_t a_size,
                             struct NhsykSolution **out);

/**
 * # Safety
 * `sol` must come from [`nhsyk_solve`] and not be freed twice.
 */
void nhsyk_solution_free(struct NhsykSolution *sol);

/**
 * Iterations used and the final change in `G`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NhsykStatus nhsyk_solution_meta(const struct NhsykSolution *sol,
                                     size_t *iters,
                                     double *final_delta);

/**
 * `(P, S)` read off the self-energy at site `x` (1-based) and time step `k`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NhsykStatus nhsyk_solution_saddle(const struct NhsykSolution *sol,
                                       size_t x,
                                       size_t k,
                                       double *p,
                                       double *s);

/**
 * On-shell `-I/N`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NhsykStatus nhsyk_solution_action(const struct NhsykSolution *sol, double *re, double *im);

/**
 * `F(phi, Q_A)/N` reached by continuation from `phi = 0`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NhsykStatus nhsyk_fcs_point(const struct NhsykModel *model,
                                 size_t n_t,
                                 double phi,
                                 size_t a_size,
                                 double *re,
                                 double *im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NHSYK_H */
