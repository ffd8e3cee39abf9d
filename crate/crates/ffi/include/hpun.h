#ifndef HPUN_H
#define HPUN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. The usage, data and numeric codes match
 * the exit codes of the `hpun` command-line tool.
 */
typedef enum HpunStatus {
  HPUN_STATUS_OK = 0,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  HPUN_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Bad configuration, unknown preset or a model/scale mismatch.
   */
  HPUN_STATUS_USAGE = 2,
  /**
   * Unreadable or malformed files, wrong buffer sizes, bad dimensions.
   */
  HPUN_STATUS_DATA = 3,
  /**
   * Non-finite values during computation.
   */
  HPUN_STATUS_NUMERIC = 4,
  /**
   * The library panicked; the handle involved should be freed.
   */
  HPUN_STATUS_INTERNAL = 5,
} HpunStatus;

/**
 * Opaque model handle.
 */
typedef struct HpunModel HpunModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static, NUL-terminated library version.
 */
const char *hpun_version(void);

/**
 * Message for the last failed call on this thread, or an empty string.
 * Valid until the next call into the library on the same thread.
 */
const char *hpun_last_error_message(void);

/**
 * Builds a freshly initialised model.
 *
 * `preset` is one of `"hpun-s"`, `"hpun-m"`, `"hpun-l"` or `"toy"`;
 * `scale` is 2, 3 or 4.
 *
 * # Safety
 * `preset` must be a valid C string and `out` a valid pointer.
 */
enum HpunStatus hpun_model_build(const char *preset,
                                 uint32_t scale,
                                 uint64_t seed,
                                 struct HpunModel **out);

/**
 * Loads a checkpoint written by the library or the command-line tool.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum HpunStatus hpun_model_load(const char *path, struct HpunModel **out);

/**
 * Writes a checkpoint atomically.
 *
 * # Safety
 * `model` must come from this library and `path` be a valid C string.
 */
enum HpunStatus hpun_model_save(const struct HpunModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void hpun_model_free(struct HpunModel *model);

/**
 * Upscaling factor, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
uint32_t hpun_model_scale(const struct HpunModel *model);

/**
 * Learnable parameter count including biases, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
uint64_t hpun_model_param_count(const struct HpunModel *model);

/**
 * Multiply-accumulates needed to produce an `hr_width × hr_height` output.
 * Both sides must be multiples of twice the scale.
 *
 * # Safety
 * `model` must come from this library and `out` be a valid pointer.
 */
enum HpunStatus hpun_model_multiadds(const struct HpunModel *model,
                                     uint32_t hr_width,
                                     uint32_t hr_height,
                                     uint64_t *out);

/**
 * Super-resolves one image.
 *
 * `input` holds `3 × height × width` values; `output` must hold
 * `output_len = 3 × (scale·height) × (scale·width)` values and receives the
 * result clamped to `[0, 1]`.
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
enum HpunStatus hpun_model_upscale(const struct HpunModel *model,
                                   const float *input,
                                   uint32_t width,
                                   uint32_t height,
                                   float *output,
                                   size_t output_len);

/**
 * PSNR in dB on the luma channel between two planar RGB images, ignoring
 * `border` pixels on every side. Identical images give infinity.
 *
 * # Safety
 * Both buffers must hold `3 × height × width` values.
 */
enum HpunStatus hpun_psnr_y(const float *a,
                            const float *b,
                            uint32_t width,
                            uint32_t height,
                            uint32_t border,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HPUN_H */
