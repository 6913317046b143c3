#ifndef DISCSEG_H
#define DISCSEG_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsegNorm {
  DSEG_NORM_L1 = 1,
  DSEG_NORM_L2 = 2,
} DsegNorm;

typedef enum DsegStatus {
  DSEG_STATUS_OK = 0,
  DSEG_STATUS_NULL_POINTER = 1,
  DSEG_STATUS_INVALID_ARGUMENT = 2,
  DSEG_STATUS_SHAPE_MISMATCH = 3,
  DSEG_STATUS_NON_FINITE = 4,
  DSEG_STATUS_IO = 5,
  DSEG_STATUS_FORMAT = 6,
  DSEG_STATUS_DIVERGED = 7,
  /**
   * A panic was caught at the boundary.
   */
  DSEG_STATUS_INTERNAL = 99,
} DsegStatus;

/**
 * Trained network loaded from a checkpoint directory.
 */
typedef struct DsegNet DsegNet;

/**
 * Generated scene: an image and its instance labels.
 */
typedef struct DsegScene DsegScene;

typedef struct DsegLossConfig {
  double delta_v;
  double delta_d;
  double alpha;
  double beta;
  double gamma;
  enum DsegNorm norm;
} DsegLossConfig;

typedef struct DsegClusterConfig {
  double bandwidth;
  /**
   * Negative selects the automatic size (0.5% of the foreground).
   */
  int64_t min_cluster_size;
  size_t max_shift_iters;
  double shift_tolerance;
  /**
   * Zero seeds in scan order; otherwise seeds are drawn at random.
   */
  uint8_t random_seeds;
  uint64_t seed;
} DsegClusterConfig;

typedef struct DsegSticksConfig {
  size_t image_size;
  size_t stick_count_min;
  size_t stick_count_max;
  double stick_length;
  double stick_width;
  uint64_t seed;
} DsegSticksConfig;

typedef struct DsegLossBreakdown {
  double l_var;
  double l_dist;
  double l_reg;
  double total;
} DsegLossBreakdown;

typedef struct DsegImageScore {
  double sbd;
  double ap50;
  size_t pred_count;
  size_t gt_count;
} DsegImageScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or an empty string. The
 * pointer stays valid until the next call into this library on the thread.
 */
const char *dseg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dseg_version(void);

struct DsegLossConfig dseg_loss_config_default(void);

struct DsegClusterConfig dseg_cluster_config_default(void);

struct DsegSticksConfig dseg_sticks_config_default(void);

/**
 * Loss of an embedding map against instance labels (0 is background).
 * `grad`, if not null, receives the gradient with the embedding's layout.
 *
 * # Safety
 * Pointers must be valid for the sizes implied by `height`, `width`, `dims`.
 */
enum DsegStatus dseg_loss(const double *emb,
                          const uint32_t *instance_labels,
                          size_t height,
                          size_t width,
                          size_t dims,
                          const struct DsegLossConfig *config,
                          struct DsegLossBreakdown *out,
                          double *grad);

/**
 * Mean-shift clustering of the foreground embeddings. Writes labels
 * 1..K (0 for background and dissolved pixels) and K.
 *
 * # Safety
 * Pointers must be valid for the sizes implied by `height`, `width`, `dims`.
 */
enum DsegStatus dseg_mean_shift(const double *emb,
                                const uint8_t *foreground,
                                size_t height,
                                size_t width,
                                size_t dims,
                                const struct DsegClusterConfig *config,
                                enum DsegNorm norm,
                                uint32_t *out_labels,
                                size_t *out_count);

/**
 * Assigns each foreground pixel to the nearest of `num_centers` centers
 * (`num_centers × dims` values) within `bandwidth`.
 *
 * # Safety
 * Pointers must be valid for the sizes implied by the dimensions.
 */
enum DsegStatus dseg_cluster_known_centers(const double *emb,
                                           const uint8_t *foreground,
                                           size_t height,
                                           size_t width,
                                           size_t dims,
                                           const double *centers,
                                           size_t num_centers,
                                           double bandwidth,
                                           enum DsegNorm norm,
                                           uint32_t *out_labels,
                                           size_t *out_count);

/**
 * Symmetric best dice, AP at IoU 0.5 and instance counts of one prediction.
 *
 * # Safety
 * Both label arrays must hold `height × width` values.
 */
enum DsegStatus dseg_score(const uint32_t *pred,
                           const uint32_t *gt,
                           size_t height,
                           size_t width,
                           struct DsegImageScore *out);

/**
 * # Safety
 * `config` must point to a valid config and `out` to writable storage.
 */
enum DsegStatus dseg_scene_generate(const struct DsegSticksConfig *config, struct DsegScene **out);

/**
 * Side length of the square scene, or 0 for a null handle.
 *
 * # Safety
 * `scene` must be null or a live handle.
 */
size_t dseg_scene_size(const struct DsegScene *scene);

/**
 * Copies the image (`size × size × 3`) and labels (`size × size`); either
 * output may be null.
 *
 * # Safety
 * `scene` must be a live handle and outputs large enough.
 */
enum DsegStatus dseg_scene_copy(const struct DsegScene *scene,
                                double *rgb,
                                uint32_t *instance_labels);

/**
 * # Safety
 * `scene` must be null or a handle not yet freed.
 */
void dseg_scene_free(struct DsegScene *scene);

/**
 * Loads a checkpoint directory written by `discseg train`.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` writable.
 */
enum DsegStatus dseg_net_load(const char *path, struct DsegNet **out);

/**
 * Embedding dimension of the network, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t dseg_net_out_dims(const struct DsegNet *net);

/**
 * Embeds an RGB image; `out_emb` receives `height × width × out_dims` values.
 *
 * # Safety
 * `net` must be live and the arrays sized as described.
 */
enum DsegStatus dseg_net_embed(const struct DsegNet *net,
                               const double *rgb,
                               size_t height,
                               size_t width,
                               double *out_emb);

/**
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void dseg_net_free(struct DsegNet *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISCSEG_H */
