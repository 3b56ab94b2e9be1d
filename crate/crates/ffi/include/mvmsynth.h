#ifndef MVMSYNTH_H
#define MVMSYNTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MvmsStatus {
  MVMS_STATUS_OK = 0,
  MVMS_STATUS_NULL_POINTER = 1,
  MVMS_STATUS_INVALID_ARGUMENT = 2,
  MVMS_STATUS_SHAPE = 3,
  MVMS_STATUS_NUMERIC = 4,
  MVMS_STATUS_DEGENERATE = 5,
  MVMS_STATUS_IO = 6,
  MVMS_STATUS_FORMAT = 7,
  MVMS_STATUS_PANIC = 8,
} MvmsStatus;

/**
 * Opaque synthesis network.
 */
typedef struct MvmsModel MvmsModel;

/**
 * Opaque cine series.
 */
typedef struct MvmsSeries MvmsSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *mvms_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mvms_version(void);

/**
 * Generates a default phantom series with the given size and seed. The
 * default annulus needs at least 64x64 pixels.
 *
 * # Safety
 * `out_series` must be a valid pointer; the handle it receives must be freed with [`mvms_series_free`].
 */
enum MvmsStatus mvms_phantom_generate(size_t frames,
                                      size_t height,
                                      size_t width,
                                      uint64_t seed,
                                      struct MvmsSeries **out_series);

/**
 * Loads a series archive directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out_series` a valid pointer.
 */
enum MvmsStatus mvms_series_load(const char *dir, struct MvmsSeries **out_series);

/**
 * # Safety
 * `series` must come from this library or be null.
 */
void mvms_series_free(struct MvmsSeries *series);

/**
 * # Safety
 * All pointers must be valid.
 */
enum MvmsStatus mvms_series_dims(const struct MvmsSeries *series,
                                 size_t *frames,
                                 size_t *height,
                                 size_t *width);

/**
 * Copies magnitude frame `t` (`height * width` values) into `dst`.
 *
 * # Safety
 * `dst` must hold `len` floats.
 */
enum MvmsStatus mvms_series_magnitude(const struct MvmsSeries *series,
                                      size_t t,
                                      float *dst,
                                      size_t len);

/**
 * Mean-of-directions velocity coefficient of two series scored on their own masks.
 *
 * # Safety
 * Handles must be valid; `out_value` must be a valid pointer.
 */
enum MvmsStatus mvms_velocity_coefficient(const struct MvmsSeries *predicted,
                                          const struct MvmsSeries *truth,
                                          double *out_value);

/**
 * # Safety
 * `pred` and `target` must hold `n` floats.
 */
enum MvmsStatus mvms_psnr(const float *pred,
                          const float *target,
                          size_t n,
                          double data_range,
                          double *out_value);

/**
 * # Safety
 * `pred` and `target` must hold `height * width` floats.
 */
enum MvmsStatus mvms_ssim(const float *pred,
                          const float *target,
                          size_t height,
                          size_t width,
                          double data_range,
                          double *out_value);

/**
 * Dice of two masks thresholded at 0.5.
 *
 * # Safety
 * `a` and `b` must hold `n` floats.
 */
enum MvmsStatus mvms_dice(const float *a, const float *b, size_t n, double *out_value);

/**
 * # Safety
 * `x` and `y` must hold `n` doubles.
 */
enum MvmsStatus mvms_pearson(const double *x, const double *y, size_t n, double *out_value);

/**
 * Horn–Schunck flow from `img1` to `img2`. `u`/`v` receive column/row displacement.
 *
 * # Safety
 * Image buffers and `u`, `v` must hold `height * width` floats.
 */
enum MvmsStatus mvms_horn_schunck(const float *img1,
                                  const float *img2,
                                  size_t height,
                                  size_t width,
                                  double alpha,
                                  size_t iterations,
                                  float *u,
                                  float *v);

/**
 * Freshly initialised full network.
 *
 * # Safety
 * `out_model` must be a valid pointer.
 */
enum MvmsStatus mvms_model_new(size_t base_channels, uint64_t seed, struct MvmsModel **out_model);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `file` must be a NUL-terminated string and `out_model` a valid pointer.
 */
enum MvmsStatus mvms_model_load(const char *file, struct MvmsModel **out_model);

/**
 * # Safety
 * `model` must come from this library or be null.
 */
void mvms_model_free(struct MvmsModel *model);

/**
 * Synthesises frame `tau + k` of `series` from anchors `tau` and `tau + 4`.
 * `mag` and `mask` receive `height * width` values, `phase` three times that.
 *
 * # Safety
 * Handles must be valid and buffers sized as described.
 */
enum MvmsStatus mvms_model_synthesize(const struct MvmsModel *model,
                                      const struct MvmsSeries *series,
                                      size_t tau,
                                      size_t k,
                                      float *mag,
                                      float *phase,
                                      float *mask);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MVMSYNTH_H */
