#ifndef SPCASCADE_H
#define SPCASCADE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SpcStatus {
  SPC_OK = 0,
  SPC_ERROR = 1,
  SPC_CONFIG = 2,
  SPC_MISSING_INPUT = 3,
  SPC_NUMERIC = 4,
  SPC_NULL_POINTER = 5,
  SPC_INVALID_ARGUMENT = 6,
  SPC_FORMAT = 7,
  SPC_INTERNAL = 8,
} SpcStatus;

/**
 * Opaque random forest.
 */
typedef struct SpcForest SpcForest;

/**
 * Opaque binary mask.
 */
typedef struct SpcMask SpcMask;

/**
 * Opaque trained pipeline: configuration plus one fold's models.
 */
typedef struct SpcSegmenter SpcSegmenter;

/**
 * Opaque intensity volume.
 */
typedef struct SpcVolume SpcVolume;

/**
 * Overlap metrics of a prediction against ground truth.
 */
typedef struct SpcMetrics {
  double dice;
  double jaccard;
  double precision;
  double recall;
} SpcMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *spc_last_error(void);

/**
 * Loads a volume from `<path>.json` and `<path>.raw`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpcStatus spc_volume_load(const char *path, struct SpcVolume **out);

/**
 * Writes the volume dimensions (x, y, z) into `dims[3]`.
 *
 * # Safety
 * `vol` must be a live handle and `dims` point to three writable values.
 */
enum SpcStatus spc_volume_dims(const struct SpcVolume *vol, size_t *dims);

/**
 * Borrowed pointer to the x-fastest intensities, or NULL for a NULL handle.
 *
 * # Safety
 * `vol` must be NULL or a live handle; the data lives as long as it.
 */
const int16_t *spc_volume_data(const struct SpcVolume *vol);

/**
 * # Safety
 * `vol` must be NULL or a handle not freed before.
 */
void spc_volume_free(struct SpcVolume *vol);

/**
 * Generates the default phantom for `seed`.
 *
 * # Safety
 * `vol` and `gt` must be valid pointers.
 */
enum SpcStatus spc_phantom_generate(uint64_t seed, struct SpcVolume **vol, struct SpcMask **gt);

/**
 * Body region of a volume: voxels above `air_threshold` after table
 * removal and hole filling.
 *
 * # Safety
 * `vol` must be a live handle and `out` a valid pointer.
 */
enum SpcStatus spc_body_mask(const struct SpcVolume *vol,
                             int16_t air_threshold,
                             struct SpcMask **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpcStatus spc_mask_load(const char *path, struct SpcMask **out);

/**
 * # Safety
 * `mask` must be a live handle and `path` a NUL-terminated string.
 */
enum SpcStatus spc_mask_save(const struct SpcMask *mask, const char *path);

/**
 * # Safety
 * `mask` must be a live handle and `dims` point to three writable values.
 */
enum SpcStatus spc_mask_dims(const struct SpcMask *mask, size_t *dims);

/**
 * Number of foreground voxels, or 0 for a NULL handle.
 *
 * # Safety
 * `mask` must be NULL or a live handle.
 */
size_t spc_mask_count(const struct SpcMask *mask);

/**
 * Borrowed pointer to the 0/1 voxels, or NULL for a NULL handle.
 *
 * # Safety
 * `mask` must be NULL or a live handle; the data lives as long as it.
 */
const uint8_t *spc_mask_data(const struct SpcMask *mask);

/**
 * # Safety
 * `mask` must be NULL or a handle not freed before.
 */
void spc_mask_free(struct SpcMask *mask);

/**
 * Dice, Jaccard, precision and recall of `pred` against `gt`.
 *
 * # Safety
 * Both masks must be live handles and `out` a valid pointer.
 */
enum SpcStatus spc_metrics(const struct SpcMask *pred,
                           const struct SpcMask *gt,
                           struct SpcMetrics *out);

/**
 * Loads a serialized random forest.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpcStatus spc_forest_load(const char *path, struct SpcForest **out);

/**
 * Feature count the forest expects, or 0 for a NULL handle.
 *
 * # Safety
 * `forest` must be NULL or a live handle.
 */
size_t spc_forest_n_features(const struct SpcForest *forest);

/**
 * Positive-class probability of one feature row of length `n`.
 *
 * # Safety
 * `forest` must be a live handle, `features` point to `n` floats and
 * `out` be a valid pointer.
 */
enum SpcStatus spc_forest_predict(const struct SpcForest *forest,
                                  const float *features,
                                  size_t n,
                                  double *out);

/**
 * # Safety
 * `forest` must be NULL or a handle not freed before.
 */
void spc_forest_free(struct SpcForest *forest);

/**
 * Loads the models of one fold from a work directory (`fold < 0` selects
 * models trained on the whole corpus). `config` may be NULL for the
 * default configuration.
 *
 * # Safety
 * `work_dir` must be a NUL-terminated string, `config` NULL or one, and
 * `out` a valid pointer.
 */
enum SpcStatus spc_segmenter_load(const char *config,
                                  const char *work_dir,
                                  int32_t fold,
                                  struct SpcSegmenter **out);

/**
 * Segments a volume end to end.
 *
 * # Safety
 * `seg` and `vol` must be live handles and `out` a valid pointer.
 */
enum SpcStatus spc_segment(const struct SpcSegmenter *seg,
                           const struct SpcVolume *vol,
                           struct SpcMask **out);

/**
 * # Safety
 * `seg` must be NULL or a handle not freed before.
 */
void spc_segmenter_free(struct SpcSegmenter *seg);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPCASCADE_H */
