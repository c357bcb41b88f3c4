#ifndef NHB_H
#define NHB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NhbStatus {
  NHB_STATUS_OK = 0,
  NHB_STATUS_NULL_POINTER = 1,
  NHB_STATUS_INVALID_ARGUMENT = 2,
  NHB_STATUS_DOMAIN = 3,
  NHB_STATUS_REJECTED = 4,
  NHB_STATUS_INFEASIBLE = 5,
  NHB_STATUS_UNREACHABLE = 6,
  NHB_STATUS_CONFIG = 7,
  NHB_STATUS_IO = 8,
  NHB_STATUS_STEP_FAILED = 9,
  NHB_STATUS_PANIC = 10,
} NhbStatus;

/**
 * A validated configuration: system parameters, potential and integrator settings.
 */
typedef struct NhbSystem NhbSystem;

/**
 * A stored trajectory.
 */
typedef struct NhbTrajectory NhbTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *nhb_version(void);

/**
 * Message of the last failed call on this thread; empty when none. Valid until
 * the next failing call on the same thread.
 */
const char *nhb_last_error(void);

void nhb_clear_error(void);

/**
 * Parse and validate a TOML run configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NhbStatus nhb_system_from_toml(const char *toml, struct NhbSystem **out);

/**
 * # Safety
 * `sys` must come from `nhb_system_from_toml` and not be used afterwards.
 */
void nhb_system_free(struct NhbSystem *sys);

/**
 * Number of coordinates k N, or 0 for a null handle.
 *
 * # Safety
 * `sys` must be null or a live handle.
 */
size_t nhb_system_n_coords(const struct NhbSystem *sys);

/**
 * H(q, p, xi). `q` and `p` hold `nhb_system_n_coords` values each.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum NhbStatus nhb_hamiltonian(const struct NhbSystem *sys,
                               const double *q,
                               const double *p,
                               double xi,
                               double *out);

/**
 * Run one chain with the configured integrator, storing every `thin`-th state.
 *
 * # Safety
 * Pointers must be valid; `q0` and `p0` hold `nhb_system_n_coords` values.
 */
enum NhbStatus nhb_simulate(const struct NhbSystem *sys,
                            const double *q0,
                            const double *p0,
                            double xi0,
                            uint64_t seed,
                            size_t thin,
                            struct NhbTrajectory **out);

/**
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t nhb_trajectory_len(const struct NhbTrajectory *traj);

/**
 * Copy stored state `index` into the caller's buffers.
 *
 * # Safety
 * `q` and `p` must have room for the system's coordinates; `t` and `xi` valid.
 */
enum NhbStatus nhb_trajectory_state(const struct NhbTrajectory *traj,
                                    size_t index,
                                    double *t,
                                    double *q,
                                    double *p,
                                    double *xi);

/**
 * Pathwise audit of the run: thermostat identity residual and count of
 * violated lower bounds on xi.
 *
 * # Safety
 * Pointers must be valid.
 */
enum NhbStatus nhb_trajectory_audit(const struct NhbTrajectory *traj,
                                    double *identity_residual,
                                    uint64_t *bound_violations);

/**
 * # Safety
 * `traj` must come from `nhb_simulate` and not be used afterwards.
 */
void nhb_trajectory_free(struct NhbTrajectory *traj);

/**
 * Dawson's integral; NaN for non-finite input.
 */
double nhb_dawson(double z);

/**
 * Largest admissible Lyapunov exponent at temperature kB T; NaN unless kbt > 0.
 */
double nhb_beta_star(double kbt);

/**
 * Least thermostat value reachable at position `q_target` after time `t`.
 *
 * # Safety
 * Arrays hold `nhb_system_n_coords` values; `out` valid.
 */
enum NhbStatus nhb_min_xi(const struct NhbSystem *sys,
                          const double *q,
                          const double *p,
                          double xi,
                          double t,
                          const double *q_target,
                          double *out);

/**
 * Build the control path from (q, p, xi) to the target over time `t` and
 * integrate the controlled system; writes the largest endpoint error. Pass
 * NaN as `dwell` to solve for the transit duration.
 *
 * # Safety
 * Arrays hold `nhb_system_n_coords` values; `max_error` valid.
 */
enum NhbStatus nhb_control_verify(const struct NhbSystem *sys,
                                  const double *q,
                                  const double *p,
                                  double xi,
                                  double t,
                                  const double *q_target,
                                  const double *p_target,
                                  double xi_target,
                                  double delta,
                                  double dwell,
                                  double *max_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NHB_H */
