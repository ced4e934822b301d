#ifndef DIRACMECH_H
#define DIRACMECH_H

/* Generated by cbindgen from the diracmech-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a fallible call. Mirrors the CLI exit codes.
 */
typedef enum DmStatus {
  /**
   * Success.
   */
  DM_STATUS_OK = 0,
  /**
   * The operation ran but a verification threshold was exceeded.
   */
  DM_STATUS_CHECK_FAILED = 1,
  /**
   * Bad arguments, unknown names, or malformed input.
   */
  DM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Singular KKT or Legendre data; the requested formulation does not
   * apply to this system.
   */
  DM_STATUS_SINGULAR = 3,
  /**
   * The trajectory left the configured norm bound.
   */
  DM_STATUS_BLOW_UP = 4,
} DmStatus;

/**
 * A configured mechanical system plus its initial data. Opaque.
 */
typedef struct DmSystem DmSystem;

/**
 * An integrated trajectory. Opaque.
 */
typedef struct DmTrajectory DmTrajectory;

/**
 * Residual summary of a solution-section verification run. Fields that a
 * run does not produce are NaN (`crosscheck_dev`) or -1 (`bracket_generating`).
 */
typedef struct DmHjReport {
  /**
   * Sup-norm distance of the section image from the admissible set.
   */
  double in_k_residual;
  /**
   * Closedness defect of the momentum one-form on the constraint.
   */
  double dgamma_residual;
  /**
   * Defect of the differential equation itself.
   */
  double dhj_residual;
  /**
   * Mean generalized energy along the section.
   */
  double energy_mean;
  /**
   * Max deviation of the generalized energy from its mean.
   */
  double energy_dev;
  /**
   * Sup-norm gap between the section flow and the direct simulation.
   */
  double crosscheck_dev;
  /**
   * 1 if the Lagrangian is linear in velocity (residuals skipped).
   */
  bool linear_velocity;
  /**
   * 1 if the constraint is integrable and checks ran on its leaf.
   */
  bool holonomic;
  /**
   * 1 / 0 for the iterated-bracket spanning test, -1 if not evaluated.
   */
  int32_t bracket_generating;
} DmHjReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message recorded on this thread, empty string if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *dm_last_error_message(void);

/**
 * Create a system by built-in name (`roller-racer`, `lc-circuit`, `bicycle`,
 * `flat-toy`, `point-vortex`). Returns NULL on failure; see
 * `dm_last_error_message`.
 */
struct DmSystem *dm_system_create(const char *name);

/**
 * Override one named parameter and rebuild the system. Initial data set via
 * `dm_system_set_initial` is preserved; otherwise the defaults track the new
 * parameters.
 */
enum DmStatus dm_system_set_param(struct DmSystem *sys, const char *key, double value);

/**
 * Configuration-space dimension, 0 if `sys` is NULL.
 */
uintptr_t dm_system_dim(const struct DmSystem *sys);

/**
 * Replace the initial configuration and/or velocity. Either pointer may be
 * NULL to keep the current value; a non-NULL pointer must reference `dim`
 * doubles matching the system dimension.
 */
enum DmStatus dm_system_set_initial(struct DmSystem *sys,
                                    const double *q,
                                    const double *v,
                                    uintptr_t dim);

/**
 * Destroy a system handle. NULL is a no-op.
 */
void dm_system_free(struct DmSystem *sys);

/**
 * Integrate the constrained dynamics from the system's initial data over
 * `[0, t_final]` with step `h`. On success `*out` owns a new trajectory.
 */
enum DmStatus dm_simulate(const struct DmSystem *sys,
                          double t_final,
                          double h,
                          struct DmTrajectory **out);

/**
 * Number of stored samples, 0 if `traj` is NULL.
 */
uintptr_t dm_trajectory_len(const struct DmTrajectory *traj);

/**
 * Configuration-space dimension of the stored states, 0 if empty or NULL.
 */
uintptr_t dm_trajectory_dim(const struct DmTrajectory *traj);

/**
 * Time stamp of sample `index`.
 */
enum DmStatus dm_trajectory_time(const struct DmTrajectory *traj, uintptr_t index, double *out);

/**
 * Copy sample `index` into caller buffers of length `dm_trajectory_dim`.
 * Any of `q`, `v`, `p` may be NULL to skip that component.
 */
enum DmStatus dm_trajectory_state(const struct DmTrajectory *traj,
                                  uintptr_t index,
                                  double *q,
                                  double *v,
                                  double *p);

/**
 * Generalized energy at sample `index`.
 */
enum DmStatus dm_trajectory_energy(const struct DmTrajectory *traj, uintptr_t index, double *out);

/**
 * Max |E(t) - E(0)| over the trajectory; NaN if `traj` is NULL.
 */
double dm_trajectory_energy_drift(const struct DmTrajectory *traj);

/**
 * Max constraint-pairing residual over the trajectory; NaN if NULL.
 */
double dm_trajectory_max_constraint_residual(const struct DmTrajectory *traj);

/**
 * Write the trajectory as CSV (same format as the CLI `simulate` output).
 */
enum DmStatus dm_trajectory_write_csv(const struct DmTrajectory *traj, const char *path);

/**
 * Destroy a trajectory handle. NULL is a no-op.
 */
void dm_trajectory_free(struct DmTrajectory *traj);

/**
 * Verify the system's built-in solution section, optionally scaled by
 * `1 + perturb`. `branch` selects the root branch (+1 or -1); pass
 * `t_final <= 0` for the per-system default cross-check horizon. Returns
 * `DM_STATUS_OK` when every residual meets `tol` (flow agreement gets a
 * floor of 1e-6), `DM_STATUS_CHECK_FAILED` otherwise; the failure list is
 * in `dm_last_error_message`.
 */
enum DmStatus dm_hj_check(const struct DmSystem *sys,
                          int32_t branch,
                          double perturb,
                          double t_final,
                          double step,
                          uint64_t seed,
                          double tol,
                          struct DmHjReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIRACMECH_H */
