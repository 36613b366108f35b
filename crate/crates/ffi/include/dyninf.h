#ifndef DYNINF_H
#define DYNINF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DiStatus {
  DI_STATUS_OK = 0,
  DI_STATUS_NULL_POINTER = 1,
  /**
   * Malformed UTF-8 or JSON.
   */
  DI_STATUS_PARSE = 2,
  /**
   * The scenario violates a model invariant.
   */
  DI_STATUS_INVALID = 3,
  /**
   * Array lengths or indices do not fit the scenario.
   */
  DI_STATUS_SHAPE = 4,
  /**
   * The call needs a different scenario or policy mode.
   */
  DI_STATUS_MODE = 5,
  /**
   * Data or observations with zero probability.
   */
  DI_STATUS_IMPOSSIBLE = 6,
  DI_STATUS_CAP_EXCEEDED = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  DI_STATUS_INTERNAL = 8,
} DiStatus;

/**
 * Opaque solved policy together with the scenario it was solved for.
 */
typedef struct DiPolicy DiPolicy;

/**
 * Opaque validated scenario.
 */
typedef struct DiScenario DiScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *di_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void di_string_free(char *s);

/**
 * Parses and validates a scenario from a NUL-terminated JSON config.
 *
 * # Safety
 * `json` must be a valid C string and `out` writable.
 */
enum DiStatus di_scenario_from_json(const char *json, struct DiScenario **out);

/**
 * # Safety
 * `s` must come from [`di_scenario_from_json`] and not have been freed.
 */
void di_scenario_free(struct DiScenario *s);

/**
 * Hex content hash of the scenario; free with [`di_string_free`].
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DiStatus di_scenario_hash(const struct DiScenario *s, char **out);

/**
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DiStatus di_solve_known(const struct DiScenario *s, struct DiPolicy **out);

/**
 * Offline policy from a training set given as `m` interleaved `(x, y)`
 * pairs, i.e. `2 * m` entries.
 *
 * # Safety
 * `pairs` must hold `2 * m` readable entries; handles must be live.
 */
enum DiStatus di_solve_offline_dataset(const struct DiScenario *s,
                                       const size_t *pairs,
                                       size_t m,
                                       struct DiPolicy **out);

/**
 * Offline policy conditioned on an explicit posterior of length `len`.
 *
 * # Safety
 * `belief` must hold `len` readable entries; handles must be live.
 */
enum DiStatus di_solve_offline_belief(const struct DiScenario *s,
                                      const double *belief,
                                      size_t len,
                                      struct DiPolicy **out);

/**
 * Online policy over the reachable posteriors, failing with
 * [`DiStatus::CapExceeded`] past `node_cap` nodes in a round.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DiStatus di_solve_online(const struct DiScenario *s, size_t node_cap, struct DiPolicy **out);

/**
 * # Safety
 * `p` must come from a `di_solve_*` call and not have been freed.
 */
void di_policy_free(struct DiPolicy *p);

/**
 * Optimal expected loss from the initial distribution.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DiStatus di_policy_value(const struct DiPolicy *p, double *out);

/**
 * Estimate at 0-based `round` for the current `x`.
 *
 * For online policies, `history_x`/`history_y` hold the `round` pairs
 * revealed so far; known and offline policies ignore them.
 *
 * # Safety
 * The history arrays must hold `round` readable entries when the policy
 * is online; handles must be live and `out` writable.
 */
enum DiStatus di_policy_action(const struct DiPolicy *p,
                               size_t round,
                               size_t x,
                               const size_t *history_x,
                               const size_t *history_y,
                               size_t *out);

/**
 * Bayes update of a posterior of length `len` on the pair `(x, y)`,
 * written to `out` (also `len` entries).
 *
 * # Safety
 * `belief` and `out` must hold `len` entries; handles must be live.
 */
enum DiStatus di_belief_update(const struct DiScenario *s,
                               const double *belief,
                               size_t len,
                               size_t x,
                               size_t y,
                               double *out);

/**
 * Policy file JSON (the format the CLI writes); free with
 * [`di_string_free`].
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DiStatus di_policy_to_json(const struct DiPolicy *p, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNINF_H */
