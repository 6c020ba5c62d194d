#ifndef UAV_RELAY_H
#define UAV_RELAY_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UavrStatus {
  UAVR_STATUS_OK = 0,
  UAVR_STATUS_NULL_POINTER = 1,
  UAVR_STATUS_INVALID_ARGUMENT = 2,
  UAVR_STATUS_CONFIG = 3,
  UAVR_STATUS_INFEASIBLE = 4,
  UAVR_STATUS_NOT_CONVERGED = 5,
  UAVR_STATUS_IO = 6,
  UAVR_STATUS_PANIC = 7,
} UavrStatus;

/**
 * Scenario configuration.
 */
typedef struct UavrConfig UavrConfig;

/**
 * Optimal policy and its metrics at one power budget.
 */
typedef struct UavrSolution UavrSolution;

typedef struct UavrSolutionSummary {
  double nu_star;
  double dual_value;
  double duality_gap;
  /**
   * Mean delay per request, s.
   */
  double delay;
  /**
   * Long-run average power, W.
   */
  double power;
  /**
   * Mean energy per cycle, J.
   */
  double energy;
  /**
   * Mean cycle duration, s.
   */
  double cycle_time;
} UavrSolutionSummary;

typedef struct UavrSimSummary {
  size_t cycles;
  uint64_t arrivals;
  uint64_t served;
  uint64_t dropped;
  double delay;
  double delay_ci95;
  double power;
  double power_ci95;
} UavrSimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *uavr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *uavr_version(void);

/**
 * Built-in default scenario. Release with [`uavr_config_free`].
 */
struct UavrConfig *uavr_config_default(void);

/**
 * Parses a TOML scenario.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out_cfg` a valid pointer.
 */
enum UavrStatus uavr_config_from_toml(const char *toml, struct UavrConfig **out_cfg);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards. NULL is ignored.
 */
void uavr_config_free(struct UavrConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum UavrStatus uavr_config_set_p_avg(struct UavrConfig *cfg, double p_avg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum UavrStatus uavr_config_set_payload_bits(struct UavrConfig *cfg, double bits);

/**
 * Propulsion power at speed `v` (m/s), W.
 *
 * # Safety
 * `cfg` must be a live handle and `power` a valid pointer.
 */
enum UavrStatus uavr_mobility_power(const struct UavrConfig *cfg, double v, double *power);

/**
 * Speed in `[0, v_max]` minimizing propulsion power, and that power.
 *
 * # Safety
 * `cfg` must be a live handle; `speed` and `power` valid pointers.
 */
enum UavrStatus uavr_min_power_speed(const struct UavrConfig *cfg, double *speed, double *power);

/**
 * Mean delay when the UAV hovers at the cell center, s.
 *
 * # Safety
 * `cfg` must be a live handle and `delay` a valid pointer.
 */
enum UavrStatus uavr_hover_center_delay(const struct UavrConfig *cfg, double *delay);

/**
 * Solves for the delay-optimal policy under the configured power budget.
 * Release the result with [`uavr_solution_free`].
 *
 * # Safety
 * `cfg` must be a live handle and `solution` a valid pointer.
 */
enum UavrStatus uavr_solve(const struct UavrConfig *cfg, struct UavrSolution **solution);

/**
 * # Safety
 * `solution` must come from [`uavr_solve`] and not be used afterwards. NULL is ignored.
 */
void uavr_solution_free(struct UavrSolution *solution);

/**
 * # Safety
 * `solution` must be a live handle and `summary` a valid pointer.
 */
enum UavrStatus uavr_solution_summary(const struct UavrSolution *solution,
                                      struct UavrSolutionSummary *summary);

/**
 * Number of waiting radii in the solution's policy.
 *
 * # Safety
 * `solution` must be a live handle or NULL (returns 0).
 */
size_t uavr_solution_num_radii(const struct UavrSolution *solution);

/**
 * Waiting decision at grid radius `index`: the radius (m), radial
 * velocity (m/s) and angular rate (rad/s).
 *
 * # Safety
 * `solution` must be a live handle; the output pointers must be valid.
 */
enum UavrStatus uavr_solution_waiting(const struct UavrSolution *solution,
                                      size_t index,
                                      double *radius,
                                      double *v_r,
                                      double *theta_c);

/**
 * Writes the policy as JSON to `path`.
 *
 * # Safety
 * `solution` must be a live handle and `path` a NUL-terminated string.
 */
enum UavrStatus uavr_solution_write_json(const struct UavrSolution *solution, const char *path);

/**
 * Simulates the solution's policy for `cycles` served requests with the
 * given seed. `continuum` selects true request locations instead of grid nodes.
 *
 * # Safety
 * `solution` must be a live handle and `summary` a valid pointer.
 */
enum UavrStatus uavr_simulate(const struct UavrSolution *solution,
                              uint64_t seed,
                              size_t cycles,
                              bool continuum,
                              struct UavrSimSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UAV_RELAY_H */
