#ifndef RADWARP_H
#define RADWARP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RwStatus {
  RW_STATUS_OK = 0,
  RW_STATUS_NULL_POINTER = 1,
  RW_STATUS_INVALID_INPUT = 2,
  RW_STATUS_INVALID_CONFIG = 3,
  RW_STATUS_FORMAT = 4,
  RW_STATUS_IO = 5,
  RW_STATUS_BUFFER_TOO_SMALL = 6,
  RW_STATUS_PANIC = 7,
} RwStatus;

/**
 * Opaque scene handle.
 */
typedef struct RwScene RwScene;

typedef struct RwRenderOptions {
  size_t samples;
  double near;
  double far;
  float background[3];
} RwRenderOptions;

/**
 * Pinhole camera; `width` and `height` in pixels.
 */
typedef struct RwCamera {
  double f;
  double cx;
  double cy;
  size_t width;
  size_t height;
} RwCamera;

/**
 * Camera-to-world pose as a row-major 3×4 `[R | t]`.
 */
typedef struct RwPose {
  double matrix[12];
} RwPose;

typedef struct RwRemoteCost {
  double latency_s;
  double energy_j;
} RwRemoteCost;

typedef struct RwTraceStats {
  size_t events;
  double streaming_fraction;
  double redundancy_ratio;
  uint64_t bytes_total;
  uint64_t unique_bytes;
} RwTraceStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to `len`) into `buf` and returns the full message length without the NUL.
 * `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t rw_last_error(char *buf, size_t len);

/**
 * Default render options.
 */
struct RwRenderOptions rw_render_options_default(void);

/**
 * Builds a synthetic scene from TOML spec text.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum RwStatus rw_scene_from_spec(const char *spec, struct RwScene **out);

/**
 * Builds the standard toy room at `resolution` vertices per axis.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum RwStatus rw_scene_toy(size_t resolution, uint64_t seed, struct RwScene **out);

/**
 * Loads a binary scene file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum RwStatus rw_scene_load(const char *path, struct RwScene **out);

/**
 * Releases a scene. Null is ignored.
 *
 * # Safety
 * `scene` must be null or a handle from this library not yet freed.
 */
void rw_scene_free(struct RwScene *scene);

/**
 * Renders one frame. `color` receives `3·W·H` floats (row-major RGB) and
 * `depth` receives `W·H` floats, +∞ where nothing was hit. Either output
 * may be null to skip it.
 *
 * # Safety
 * All non-null pointers must be valid; `color` for `color_len` floats and
 * `depth` for `depth_len` floats.
 */
enum RwStatus rw_render_frame(const struct RwScene *scene,
                              const struct RwCamera *cam,
                              const struct RwPose *pose_in,
                              const struct RwRenderOptions *options,
                              float *color,
                              size_t color_len,
                              float *depth,
                              size_t depth_len);

/**
 * PSNR in dB between two `width × height` RGB float images; +∞ when equal.
 *
 * # Safety
 * `a` and `b` must each hold `3·width·height` floats; `out` must be valid.
 */
enum RwStatus rw_psnr(const float *a, const float *b, size_t width, size_t height, double *out);

/**
 * Wireless cost of shipping `bytes` with the default link model.
 */
struct RwRemoteCost rw_remote_model(uint64_t bytes);

/**
 * Feature DRAM trace statistics for one frame, in memory-centric order when
 * `memory_centric` is non-zero and pixel order otherwise. MVoxels are sized
 * for `buffer_bytes` of on-chip feature storage.
 *
 * # Safety
 * All pointers must be valid.
 */
enum RwStatus rw_feature_trace_stats(const struct RwScene *scene,
                                     const struct RwCamera *cam,
                                     const struct RwPose *pose_in,
                                     const struct RwRenderOptions *options,
                                     int32_t memory_centric,
                                     size_t buffer_bytes,
                                     uint64_t burst_bytes,
                                     struct RwTraceStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RADWARP_H */
