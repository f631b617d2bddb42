#ifndef PISTE_H
#define PISTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PisteStatus {
  PISTE_STATUS_OK = 0,
  PISTE_STATUS_NULL_POINTER = 1,
  PISTE_STATUS_INVALID_ARGUMENT = 2,
  PISTE_STATUS_POINT_AT_INFINITY = 3,
  PISTE_STATUS_SINGULAR_MATRIX = 4,
  PISTE_STATUS_DEGENERATE_CONFIGURATION = 5,
  PISTE_STATUS_INSUFFICIENT_DATA = 6,
  PISTE_STATUS_NO_CONSENSUS = 7,
  PISTE_STATUS_INVALID_BOX = 8,
  PISTE_STATUS_INVALID_FRAME = 9,
  PISTE_STATUS_DIMENSION_MISMATCH = 10,
  PISTE_STATUS_IO = 11,
  PISTE_STATUS_PARSE = 12,
  PISTE_STATUS_BUFFER_TOO_SMALL = 13,
  PISTE_STATUS_PANIC = 14,
  PISTE_STATUS_INTERNAL = 15,
} PisteStatus;

/**
 * Trajectory point provenance.
 */
typedef enum PistePointFlag {
  PISTE_POINT_FLAG_MEASURED = 0,
  PISTE_POINT_FLAG_INTERPOLATED = 1,
  PISTE_POINT_FLAG_OFF_HORIZON = 2,
} PistePointFlag;

/**
 * Opaque engine handle.
 */
typedef struct PisteEngine PisteEngine;

typedef struct PisteEngineConfig {
  uint64_t seed;
  bool snow_filter;
  uint32_t max_keypoints;
  uint32_t nms_radius;
  double inlier_threshold;
  uint32_t min_matches;
  double bbox_margin;
} PisteEngineConfig;

typedef struct PisteBBox {
  double x;
  double y;
  double w;
  double h;
} PisteBBox;

typedef struct PistePoint {
  double x;
  double y;
} PistePoint;

/**
 * Row-major 3×3 matrix, canonical scale.
 */
typedef struct PisteHomography {
  double m[9];
} PisteHomography;

typedef struct PisteFrameDiagnostics {
  uint64_t frame;
  struct PisteBBox bbox;
  bool tracker_lost;
  bool bridged;
  uint64_t keypoints;
  uint64_t matches;
  uint64_t inliers;
  /**
   * False for frame 0.
   */
  bool has_homography;
  struct PisteHomography homography;
} PisteFrameDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *piste_version(void);

/**
 * Message for the last failed call on this thread (empty after a success).
 * Valid until the next call into the library on the same thread.
 */
const char *piste_last_error_message(void);

/**
 * Writes the library defaults into `out`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one config.
 */
enum PisteStatus piste_engine_config_default(struct PisteEngineConfig *out);

/**
 * Bottom-centre of a box.
 *
 * # Safety
 * `b` and `out` must be null or valid pointers.
 */
enum PisteStatus piste_footpoint(const struct PisteBBox *b, struct PistePoint *out);

/**
 * Maps `p` through `h`.
 *
 * # Safety
 * `h` and `out` must be null or valid pointers.
 */
enum PisteStatus piste_homography_apply(const struct PisteHomography *h,
                                        struct PistePoint p,
                                        struct PistePoint *out);

/**
 * `out = h2 · h1` (apply `h1` first).
 *
 * # Safety
 * All pointers must be null or valid; `out` may alias an input.
 */
enum PisteStatus piste_homography_compose(const struct PisteHomography *h2,
                                          const struct PisteHomography *h1,
                                          struct PisteHomography *out);

/**
 * # Safety
 * `h` and `out` must be null or valid; `out` may alias `h`.
 */
enum PisteStatus piste_homography_invert(const struct PisteHomography *h,
                                         struct PisteHomography *out);

/**
 * Robustly fits `src[i] → dst[i]` with default settings and `seed`.
 * `inlier_flags` (optional) receives `n` bytes, 1 for inliers.
 *
 * # Safety
 * `src` and `dst` must hold `n` points; `inlier_flags` must be null or hold
 * `n` bytes; `out` must be valid.
 */
enum PisteStatus piste_estimate_homography(const struct PistePoint *src,
                                           const struct PistePoint *dst,
                                           size_t n,
                                           uint64_t seed,
                                           struct PisteHomography *out,
                                           uint8_t *inlier_flags);

/**
 * Starts an engine that follows the athlete with the built-in tracker.
 * `config` may be null for defaults. On success `*out` owns a new handle.
 *
 * # Safety
 * `rgb` must hold `width * height * 3` bytes; other pointers valid or null.
 */
enum PisteStatus piste_engine_new(const uint8_t *rgb,
                                  uint32_t width,
                                  uint32_t height,
                                  const struct PisteBBox *b0,
                                  const struct PisteEngineConfig *config,
                                  struct PisteEngine **out);

/**
 * Starts an engine whose boxes are supplied with
 * [`piste_engine_step_with_box`].
 *
 * # Safety
 * As for [`piste_engine_new`].
 */
enum PisteStatus piste_engine_new_manual(const uint8_t *rgb,
                                         uint32_t width,
                                         uint32_t height,
                                         const struct PisteBBox *b0,
                                         const struct PisteEngineConfig *config,
                                         struct PisteEngine **out);

/**
 * Processes the next frame with the built-in tracker.
 *
 * # Safety
 * `engine` must be a live handle; `rgb` must hold `width * height * 3` bytes.
 */
enum PisteStatus piste_engine_step(struct PisteEngine *engine,
                                   const uint8_t *rgb,
                                   uint32_t width,
                                   uint32_t height);

/**
 * Processes the next frame with a caller-supplied athlete box.
 *
 * # Safety
 * As for [`piste_engine_step`]; `bbox` must be valid.
 */
enum PisteStatus piste_engine_step_with_box(struct PisteEngine *engine,
                                            const uint8_t *rgb,
                                            uint32_t width,
                                            uint32_t height,
                                            const struct PisteBBox *bbox);

/**
 * Number of trajectory points (frames processed so far); 0 for null.
 *
 * # Safety
 * `engine` must be null or a live handle.
 */
size_t piste_engine_trajectory_len(const struct PisteEngine *engine);

/**
 * Copies the trajectory (current-frame coordinates) into `points` and,
 * if non-null, the per-point flags into `flags`. Fails with
 * `BufferTooSmall` when `capacity` is below the trajectory length.
 *
 * # Safety
 * `points` (and `flags` if non-null) must hold `capacity` elements.
 */
enum PisteStatus piste_engine_trajectory_copy(const struct PisteEngine *engine,
                                              struct PistePoint *points,
                                              enum PistePointFlag *flags,
                                              size_t capacity);

/**
 * Smoothed drawing polyline. `*needed` always receives the required
 * length; `out` may be null to query it.
 *
 * # Safety
 * `out` must be null or hold `capacity` points; `needed` must be valid.
 */
enum PisteStatus piste_engine_smooth(const struct PisteEngine *engine,
                                     uint32_t samples_per_segment,
                                     struct PistePoint *out,
                                     size_t capacity,
                                     size_t *needed);

/**
 * Writes the trajectory export document to `path` (UTF-8).
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum PisteStatus piste_engine_export(const struct PisteEngine *engine, const char *path);

/**
 * Diagnostics of the most recently processed frame.
 *
 * # Safety
 * `engine` must be a live handle; `out` valid.
 */
enum PisteStatus piste_engine_last_diagnostics(const struct PisteEngine *engine,
                                               struct PisteFrameDiagnostics *out);

/**
 * Releases an engine; null is ignored.
 *
 * # Safety
 * `engine` must be null or a handle not yet freed.
 */
void piste_engine_free(struct PisteEngine *engine);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PISTE_H */
