#ifndef FALIGN_H
#define FALIGN_H

/* Generated by cbindgen from falign-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code for every FFI entry point.
 */
typedef enum FalignStatus {
  FALIGN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FALIGN_STATUS_NULL_ARGUMENT = 1,
  /**
   * A value was out of range or inconsistent with the configuration.
   */
  FALIGN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Dataset missing or unreadable.
   */
  FALIGN_STATUS_DATA_ERROR = 3,
  /**
   * Training produced a non-finite value.
   */
  FALIGN_STATUS_NUMERIC_ERROR = 4,
  /**
   * Output files could not be written.
   */
  FALIGN_STATUS_IO_ERROR = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  FALIGN_STATUS_PANIC = 6,
} FalignStatus;

/**
 * Update rule selector.
 */
typedef enum FalignRule {
  FALIGN_RULE_BP = 0,
  FALIGN_RULE_FA = 1,
  FALIGN_RULE_DFA = 2,
  /**
   * Requires an angle set via `falign_config_set_angle`.
   */
  FALIGN_RULE_PERTURBED_BP = 3,
  FALIGN_RULE_LAST_LAYER_ONLY = 4,
} FalignRule;

/**
 * Weight initialization mode.
 */
typedef enum FalignWeightMode {
  FALIGN_WEIGHT_MODE_NORMAL_SCALED = 0,
  FALIGN_WEIGHT_MODE_SIGN_MATCHED = 1,
  FALIGN_WEIGHT_MODE_EQUAL_TO_FEEDBACK = 2,
} FalignWeightMode;

/**
 * Feedback matrix entry distribution.
 */
typedef enum FalignFeedbackDist {
  FALIGN_FEEDBACK_DIST_RADEMACHER = 0,
  FALIGN_FEEDBACK_DIST_NORMAL = 1,
} FalignFeedbackDist;

/**
 * Dataset selector.
 */
typedef enum FalignDataset {
  FALIGN_DATASET_MNIST = 0,
  FALIGN_DATASET_SYNTHETIC_XOR = 1,
} FalignDataset;

/**
 * Opaque experiment configuration handle.
 */
typedef struct FalignConfig FalignConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *falign_version(void);

/**
 * Message for the most recent failure on this thread. Never null; the
 * pointer stays valid until the next falign call on the same thread.
 */
const char *falign_last_error(void);

/**
 * Fresh configuration with the standard defaults (the MNIST
 * 784-700-1000-10 setup, FA rule, lr 0.05, batch 100, scale 0.05).
 * Release with `falign_config_free`.
 */
struct FalignConfig *falign_config_new(void);

/**
 * Releases a configuration handle. A null pointer is a no-op.
 *
 * # Safety
 * `cfg` must be a pointer obtained from `falign_config_new` that has not
 * been freed yet.
 */
void falign_config_free(struct FalignConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_rule(struct FalignConfig *cfg, enum FalignRule rule);

/**
 * Perturbation angle in radians, `[0, pi]`; only meaningful with the
 * perturbed-backprop rule.
 *
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_angle(struct FalignConfig *cfg, double angle);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_epochs(struct FalignConfig *cfg, uint32_t epochs);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_seed(struct FalignConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_learning_rate(struct FalignConfig *cfg, double lr);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_batch_size(struct FalignConfig *cfg, size_t batch);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_weight_scale(struct FalignConfig *cfg, double scale);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_weight_mode(struct FalignConfig *cfg,
                                                enum FalignWeightMode mode);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_feedback_dist(struct FalignConfig *cfg,
                                                  enum FalignFeedbackDist dist);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_cadence(struct FalignConfig *cfg, uint64_t cadence);

/**
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`.
 */
enum FalignStatus falign_config_set_dataset(struct FalignConfig *cfg, enum FalignDataset dataset);

/**
 * Directory holding the MNIST IDX files.
 *
 * # Safety
 * `cfg` must be a live handle; `path` must be a NUL-terminated UTF-8
 * string.
 */
enum FalignStatus falign_config_set_data_dir(struct FalignConfig *cfg, const char *path);

/**
 * Directory to receive `train.csv` and `train.manifest.json`; unset
 * means no files are written.
 *
 * # Safety
 * `cfg` must be a live handle; `path` must be a NUL-terminated UTF-8
 * string.
 */
enum FalignStatus falign_config_set_out_dir(struct FalignConfig *cfg, const char *path);

/**
 * Layer sizes, input first, output last; at least two entries.
 *
 * # Safety
 * `cfg` must be a live handle; `sizes` must point to `len` readable
 * `usize` values.
 */
enum FalignStatus falign_config_set_arch(struct FalignConfig *cfg, const size_t *sizes, size_t len);

/**
 * Runs one training configuration. On success writes the final test
 * accuracy to `out_final_test_accuracy` (may be null if the caller does
 * not want it) and, when an output directory is configured, the metrics
 * CSV plus a JSON manifest.
 *
 * # Safety
 * `cfg` must be a live handle from `falign_config_new`;
 * `out_final_test_accuracy` must be null or point to a writable f64.
 */
enum FalignStatus falign_train(const struct FalignConfig *cfg, double *out_final_test_accuracy);

/**
 * Verifies analytic gradients against central finite differences on a
 * small seeded network; writes the max relative error observed.
 *
 * # Safety
 * `out_max_rel_error` must be null or point to a writable f64.
 */
enum FalignStatus falign_gradcheck(uint64_t seed, double *out_max_rel_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FALIGN_H */
