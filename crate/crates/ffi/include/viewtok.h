#ifndef VIEWTOK_H
#define VIEWTOK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum VtStatus {
  VT_STATUS_OK = 0,
  VT_STATUS_NULL_ARGUMENT = 1,
  VT_STATUS_INVALID_UTF8 = 2,
  // Bad configuration or arguments.
  VT_STATUS_USAGE = 3,
  // Missing or malformed input data.
  VT_STATUS_DATA = 4,
  // A corrupt, truncated or mismatched checkpoint.
  VT_STATUS_CHECKPOINT = 5,
  VT_STATUS_BACKEND = 6,
  VT_STATUS_PANIC = 7,
} VtStatus;

// A frozen diffusion backend.
typedef struct VtBackend VtBackend;

// Trained mappers and their configuration.
typedef struct VtCheckpoint VtCheckpoint;

// An RGB image with values in `[0, 1]`, stored row-major, channels last.
typedef struct VtImage VtImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *vt_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *vt_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void vt_string_free(char *s);

// Creates the bundled mock backend with default settings and `seed`.
//
// # Safety
// `out` must be valid for a pointer write.
enum VtStatus vt_mock_backend_new(uint64_t seed, struct VtBackend **out);

// # Safety
// `backend` must come from [`vt_mock_backend_new`] and not have been freed.
void vt_backend_free(struct VtBackend *backend);

// Hex digest of the backend's frozen weights. Free with [`vt_string_free`].
//
// # Safety
// `backend` must be a live handle and `out` valid for a pointer write.
enum VtStatus vt_backend_weights_digest(const struct VtBackend *backend, char **out);

// Loads and verifies a checkpoint. With a non-null `backend` the
// checkpoint must have been written for that backend.
//
// # Safety
// `path` must be a NUL-terminated string, `backend` null or live, `out`
// valid for a pointer write.
enum VtStatus vt_checkpoint_load(const char *path,
                                 const struct VtBackend *backend,
                                 struct VtCheckpoint **out);

// # Safety
// `ckpt` must come from [`vt_checkpoint_load`] and not have been freed.
void vt_checkpoint_free(struct VtCheckpoint *ckpt);

// Optimizer steps the checkpoint was trained for.
//
// # Safety
// `ckpt` must be live and `out` valid for a write.
enum VtStatus vt_checkpoint_step(const struct VtCheckpoint *ckpt, uint64_t *out);

// Number of scene tokens held by the checkpoint.
//
// # Safety
// `ckpt` must be live and `out` valid for a write.
enum VtStatus vt_checkpoint_scene_count(const struct VtCheckpoint *ckpt, size_t *out);

// Renders the checkpoint's scene at a camera on the sphere, angles in
// degrees, with the standard prompt. A checkpoint with exactly one scene
// token uses it; otherwise the class word fills the scene slot. `steps`
// of 0 selects the backend default.
//
// # Safety
// Handles must be live and `out` valid for a pointer write.
enum VtStatus vt_generate_spherical(const struct VtBackend *backend,
                                    const struct VtCheckpoint *ckpt,
                                    double theta_deg,
                                    double phi_deg,
                                    double radius,
                                    uint32_t steps,
                                    uint64_t seed,
                                    struct VtImage **out);

// Copies `height * width * channels` values into a new image.
//
// # Safety
// `data` must point to that many readable values; `out` valid for a write.
enum VtStatus vt_image_new(size_t height,
                           size_t width,
                           size_t channels,
                           const double *data,
                           struct VtImage **out);

// # Safety
// `path` must be a NUL-terminated string and `out` valid for a write.
enum VtStatus vt_image_load_png(const char *path, struct VtImage **out);

// # Safety
// `image` must be live and `path` a NUL-terminated string.
enum VtStatus vt_image_save_png(const struct VtImage *image, const char *path);

// Writes height, width and channel count. Any out pointer may be null.
//
// # Safety
// `image` must be live; non-null out pointers valid for writes.
enum VtStatus vt_image_shape(const struct VtImage *image,
                             size_t *height,
                             size_t *width,
                             size_t *channels);

// Borrowed pointer to the pixel values, valid while `image` lives.
//
// # Safety
// `image` must be live or null.
const double *vt_image_data(const struct VtImage *image);

// # Safety
// `image` must come from this library and not have been freed.
void vt_image_free(struct VtImage *image);

// PSNR in dB, capped at 100 for identical images.
//
// # Safety
// Both images must be live and `out` valid for a write.
enum VtStatus vt_psnr(const struct VtImage *a, const struct VtImage *b, double *out);

// Mean SSIM over 11x11 Gaussian windows on luma.
//
// # Safety
// Both images must be live and `out` valid for a write.
enum VtStatus vt_ssim(const struct VtImage *a, const struct VtImage *b, double *out);

// Writes 1 if the query camera lies in the convex hull of the training
// cameras in (theta, phi), else 0. Angles in degrees.
//
// # Safety
// `train_theta` and `train_phi` must each hold `n` values; `out` valid for
// a write.
enum VtStatus vt_classify_view(double theta_deg,
                               double phi_deg,
                               const double *train_theta,
                               const double *train_phi,
                               size_t n,
                               int32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIEWTOK_H */
