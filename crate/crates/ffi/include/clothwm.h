#ifndef CLOTHWM_H
#define CLOTHWM_H

#pragma once

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ClothwmStatus {
  CLOTHWM_STATUS_OK = 0,
  CLOTHWM_STATUS_NULL_POINTER = 1,
  CLOTHWM_STATUS_INVALID_ARGUMENT = 2,
  CLOTHWM_STATUS_CONFIG = 3,
  CLOTHWM_STATUS_IO = 4,
  CLOTHWM_STATUS_ENV = 5,
  CLOTHWM_STATUS_POLICY = 6,
  CLOTHWM_STATUS_TRAINER = 7,
  CLOTHWM_STATUS_BUFFER_TOO_SMALL = 8,
  CLOTHWM_STATUS_PANIC = 9,
} ClothwmStatus;

/**
 * A cloth environment and its latest observation.
 */
typedef struct ClothwmEnv ClothwmEnv;

/**
 * A keypoint controller without recurrent input.
 */
typedef struct ClothwmPolicy ClothwmPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message (NUL-terminated, truncated to `len`) into
 * `buf` and returns the full message length excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t clothwm_last_error(char *buf, size_t len);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *clothwm_status_name(enum ClothwmStatus status);

/**
 * Length of the keypoint state vector.
 */
size_t clothwm_state_dim(void);

/**
 * Creates an environment from a preset name (`"desk"` or `"paper"`).
 *
 * # Safety
 * `preset` must be a NUL-terminated string; `out` must be writable.
 */
enum ClothwmStatus clothwm_env_new(const char *preset, struct ClothwmEnv **out);

/**
 * Releases an environment. Null is ignored.
 *
 * # Safety
 * `env` must come from [`clothwm_env_new`] and not be used afterwards.
 */
void clothwm_env_free(struct ClothwmEnv *env);

/**
 * # Safety
 * `env` must be a live handle.
 */
enum ClothwmStatus clothwm_env_reset(struct ClothwmEnv *env, uint64_t seed);

/**
 * # Safety
 * `env` must be a live handle; `out` must be writable.
 */
enum ClothwmStatus clothwm_env_action_dim(const struct ClothwmEnv *env, size_t *out);

/**
 * Applies `action` (length `action_dim`) and reports the reward and
 * whether the episode ended. `reward` and `done` may be null.
 *
 * # Safety
 * `env` must be a live handle; `action` must be valid for `len` doubles.
 */
enum ClothwmStatus clothwm_env_step(struct ClothwmEnv *env,
                                    const double *action,
                                    size_t len,
                                    double *reward,
                                    bool *done);

/**
 * Writes the normalised keypoint state (`clothwm_state_dim()` doubles).
 *
 * # Safety
 * `env` must be a live handle; `buf` must be valid for `len` doubles.
 */
enum ClothwmStatus clothwm_env_state(const struct ClothwmEnv *env, double *buf, size_t len);

/**
 * Writes the channel-major 3x64x64 camera image.
 *
 * # Safety
 * `env` must be a live handle; `buf` must be valid for `len` bytes.
 */
enum ClothwmStatus clothwm_env_render(const struct ClothwmEnv *env, uint8_t *buf, size_t len);

/**
 * Builds a keypoint controller for the preset's action layout from a flat
 * genome.
 *
 * # Safety
 * `preset` must be NUL-terminated; `genome` valid for `len` doubles;
 * `out` writable.
 */
enum ClothwmStatus clothwm_policy_new(const char *preset,
                                      const double *genome,
                                      size_t len,
                                      struct ClothwmPolicy **out);

/**
 * Genome length of the keypoint controller for a preset.
 *
 * # Safety
 * `preset` must be NUL-terminated; `out` writable.
 */
enum ClothwmStatus clothwm_policy_param_count(const char *preset, size_t *out);

/**
 * # Safety
 * `policy` must come from [`clothwm_policy_new`] and not be used afterwards.
 */
void clothwm_policy_free(struct ClothwmPolicy *policy);

/**
 * Computes the controller's action for the environment's current state.
 *
 * # Safety
 * Handles must be live; `action` must be valid for `len` doubles.
 */
enum ClothwmStatus clothwm_policy_act(const struct ClothwmPolicy *policy,
                                      const struct ClothwmEnv *env,
                                      double *action,
                                      size_t len);

/**
 * Runs (or resumes) an experiment described by `key=value` config text
 * (desk defaults) in `run_dir`, storing the final best-so-far return.
 *
 * # Safety
 * Strings must be NUL-terminated; `best_return` may be null.
 */
enum ClothwmStatus clothwm_train(const char *config_text, const char *run_dir, double *best_return);

/**
 * Mean and sample standard deviation of the return of a saved genome over
 * `episodes` seeded episodes. `std_dev` may be null.
 *
 * # Safety
 * `genome_path` must be NUL-terminated; `mean` writable.
 */
enum ClothwmStatus clothwm_evaluate_genome(const char *genome_path,
                                           size_t episodes,
                                           uint64_t seed,
                                           double *mean,
                                           double *std_dev);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLOTHWM_H */
