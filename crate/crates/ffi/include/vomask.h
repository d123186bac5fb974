#ifndef VOMASK_H
#define VOMASK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum VomaskStatus {
  VOMASK_STATUS_OK = 0,
  VOMASK_STATUS_NULL_POINTER = 1,
  VOMASK_STATUS_INVALID_ARGUMENT = 2,
  VOMASK_STATUS_DIMENSION_MISMATCH = 3,
  VOMASK_STATUS_CONFIG = 4,
  VOMASK_STATUS_EMPTY_REGION = 5,
  // Malformed `.mseq`, image or manifest data.
  VOMASK_STATUS_FORMAT = 6,
  VOMASK_STATUS_IO = 7,
  VOMASK_STATUS_JSON = 8,
  VOMASK_STATUS_PANIC = 9,
} VomaskStatus;

typedef enum VomaskCompressionMode {
  VOMASK_COMPRESSION_MODE_UNION = 0,
  VOMASK_COMPRESSION_MODE_NEAREST = 1,
} VomaskCompressionMode;

// Opaque 8-bit frame sequence.
typedef struct VomaskFrames VomaskFrames;

// Opaque binary mask volume.
typedef struct VomaskMask VomaskMask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread; do not free.
const char *vomask_last_error(void);

// Library version, static string.
const char *vomask_version(void);

// New mask from `frames * height * width` bytes, or all zeros when `data`
// is null.
//
// # Safety
// `data` must be null or point to `frames * height * width` readable bytes;
// `out` must be a valid pointer.
enum VomaskStatus vomask_mask_new(size_t frames,
                                  size_t height,
                                  size_t width,
                                  const uint8_t *data,
                                  struct VomaskMask **out);

// # Safety
// `m` must be null or a handle from this library not yet freed.
void vomask_mask_free(struct VomaskMask *m);

// # Safety
// `m` must be a live handle; the out pointers must be valid.
enum VomaskStatus vomask_mask_dims(const struct VomaskMask *m,
                                   size_t *frames,
                                   size_t *height,
                                   size_t *width);

// Number of set pixels.
//
// # Safety
// `m` must be a live handle; `out` must be valid.
enum VomaskStatus vomask_mask_count(const struct VomaskMask *m, size_t *out);

// Copies the mask bytes into `buf`, which must hold exactly
// `frames * height * width` bytes.
//
// # Safety
// `m` must be a live handle; `buf` must point to `len` writable bytes.
enum VomaskStatus vomask_mask_copy(const struct VomaskMask *m, uint8_t *buf, size_t len);

// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum VomaskStatus vomask_mseq_read(const char *path, struct VomaskMask **out);

// # Safety
// `m` must be a live handle; `path` must be a NUL-terminated string.
enum VomaskStatus vomask_mseq_write(const struct VomaskMask *m, const char *path);

// Compresses onto `1 + ceil((F - 1) / ratio)` latent frames.
//
// # Safety
// `m` must be a live handle; `out` must be valid.
enum VomaskStatus vomask_compress(const struct VomaskMask *m,
                                  size_t ratio,
                                  enum VomaskCompressionMode mode,
                                  struct VomaskMask **out);

// Windowed union expanded back to the input length.
//
// # Safety
// `m` must be a live handle; `out` must be valid.
enum VomaskStatus vomask_preprocess(const struct VomaskMask *m,
                                    size_t ratio,
                                    struct VomaskMask **out);

// # Safety
// `m` must be a live handle; `out` must be valid.
enum VomaskStatus vomask_erode(const struct VomaskMask *m, size_t radius, struct VomaskMask **out);

// # Safety
// `m` must be a live handle; `out` must be valid.
enum VomaskStatus vomask_dilate(const struct VomaskMask *m, size_t radius, struct VomaskMask **out);

// Replaces each frame by its filled bounding box.
//
// # Safety
// `m` must be a live handle; `out` must be valid.
enum VomaskStatus vomask_bbox_fit(const struct VomaskMask *m, struct VomaskMask **out);

// Keeps frames `0, k, 2k, ...`.
//
// # Safety
// `m` must be a live handle; `out` must be valid.
enum VomaskStatus vomask_subsample(const struct VomaskMask *m, size_t k, struct VomaskMask **out);

// Pixelwise OR of two masks of equal dimensions.
//
// # Safety
// `a` and `b` must be live handles; `out` must be valid.
enum VomaskStatus vomask_union(const struct VomaskMask *a,
                               const struct VomaskMask *b,
                               struct VomaskMask **out);

// Degrades a mask with a JSON degradation spec (same fields as the CLI
// config).
//
// # Safety
// `m` must be a live handle; `spec_json` NUL-terminated; `out` valid.
enum VomaskStatus vomask_degrade(const struct VomaskMask *m,
                                 const char *spec_json,
                                 struct VomaskMask **out);

// Generates a random mask from a JSON generation spec.
//
// # Safety
// `spec_json` must be NUL-terminated; `out` valid.
enum VomaskStatus vomask_randmask(const char *spec_json, struct VomaskMask **out);

// New frame sequence from `frames * height * width * channels` bytes;
// `channels` is 1 or 3.
//
// # Safety
// `data` must point to that many readable bytes; `out` must be valid.
enum VomaskStatus vomask_frames_new(size_t frames,
                                    size_t height,
                                    size_t width,
                                    size_t channels,
                                    const uint8_t *data,
                                    struct VomaskFrames **out);

// Reads a PGM/PPM frame directory.
//
// # Safety
// `path` must be NUL-terminated; `out` must be valid.
enum VomaskStatus vomask_frames_read(const char *path, struct VomaskFrames **out);

// # Safety
// `f` must be null or a handle from this library not yet freed.
void vomask_frames_free(struct VomaskFrames *f);

// Mean per-frame PSNR in dB, capped at 100. `exclude` may be null; set
// pixels are left out.
//
// # Safety
// `a`, `b` live handles; `exclude` null or live; `out` valid.
enum VomaskStatus vomask_psnr(const struct VomaskFrames *a,
                              const struct VomaskFrames *b,
                              const struct VomaskMask *exclude,
                              double *out);

// Mean per-frame SSIM. `exclude` may be null.
//
// # Safety
// As [`vomask_psnr`].
enum VomaskStatus vomask_ssim(const struct VomaskFrames *a,
                              const struct VomaskFrames *b,
                              const struct VomaskMask *exclude,
                              double *out);

// Mean absolute consecutive-frame difference over 255. `exclude` may be null.
//
// # Safety
// `v` live handle; `exclude` null or live; `out` valid.
enum VomaskStatus vomask_temporal_flicker(const struct VomaskFrames *v,
                                          const struct VomaskMask *exclude,
                                          double *out);

// Region-consistency score of the `target` region in `v`.
//
// # Safety
// `v`, `target` live handles; `out` valid.
enum VomaskStatus vomask_region_consistency(const struct VomaskFrames *v,
                                            const struct VomaskMask *target,
                                            double *out);

// Full metrics report as a JSON string; release it with
// [`vomask_string_free`]. `gt` and `flags_json` may be null.
//
// # Safety
// `pred`, `mask` live handles; `gt` null or live; `flags_json` null or
// NUL-terminated; `out` valid.
enum VomaskStatus vomask_evaluate(const struct VomaskFrames *pred,
                                  const struct VomaskFrames *gt,
                                  const struct VomaskMask *mask,
                                  const char *flags_json,
                                  char **out);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void vomask_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOMASK_H */
