/* C interface for the predisplay delay-compensation pipeline. */

#ifndef PREDISPLAY_H
#define PREDISPLAY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a C-API call. Zero is success; anything else is an error whose
// detail is available from `pd_last_error()` on the calling thread.
typedef enum PdStatus {
  // The call succeeded.
  PD_STATUS_OK = 0,
  // A required pointer argument was null.
  PD_STATUS_NULL_POINTER = 1,
  // An argument value was out of its documented domain.
  PD_STATUS_INVALID_ARGUMENT = 2,
  // The sequence could not be read (missing or malformed files).
  PD_STATUS_IO_ERROR = 3,
  // A frame index or index + delay lies outside the sequence.
  PD_STATUS_OUT_OF_RANGE = 4,
  // A caller-provided buffer is smaller than required.
  PD_STATUS_BUFFER_TOO_SMALL = 5,
  // Rendering or prediction failed.
  PD_STATUS_RENDER_ERROR = 6,
  // An internal invariant failed; the library caught a panic.
  PD_STATUS_INTERNAL = 7,
} PdStatus;

// Compensation method selector.
typedef enum PdMethod {
  // Depth back-projection, sphere splatting, hole inpainting.
  PD_METHOD_POINTCLOUD = 0,
  // Single-plane homography warp; the plane is inferred from the
  // sequence name (frontal bundles use their plane, everything else the
  // ground plane at the preset mount height).
  PD_METHOD_HOMOGRAPHY = 1,
  // Image-space crop-and-scale from planar displacement.
  PD_METHOD_CROP_SCALE = 2,
} PdMethod;

// An opened sequence bundle. Opaque; create with `pd_sequence_open`,
// destroy with `pd_sequence_close`.
typedef struct PdSequence PdSequence;

// Static facts about an opened sequence.
typedef struct PdSequenceInfo {
  // Frame width in pixels.
  uint32_t width;
  // Frame height in pixels.
  uint32_t height;
  // Number of frames in the sequence.
  uint64_t frame_count;
  // Native capture rate, Hz.
  double frame_rate;
} PdSequenceInfo;

// Planar robot pose / displacement: meters, meters, radians.
typedef struct PdPlanarPose {
  double x;
  double y;
  double theta;
} PdPlanarPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread, as a
// NUL-terminated UTF-8 string. Never null. The pointer stays valid until
// the next failing call on the same thread.
const char *pd_last_error(void);

// Opens a sequence bundle directory (manifest, frames, poses, commands)
// and returns a handle through `out`. On failure `*out` is untouched.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be a valid
// pointer.
enum PdStatus pd_sequence_open(const char *path, struct PdSequence **out);

// Releases a handle returned by `pd_sequence_open`. Null is a no-op.
//
// # Safety
// `seq` must be null or a pointer previously returned by
// `pd_sequence_open` that has not been closed yet.
void pd_sequence_close(struct PdSequence *seq);

// Fills `out` with the sequence dimensions, length, and frame rate.
//
// # Safety
// `seq` must be a live handle; `out` must be a valid pointer.
enum PdStatus pd_sequence_info(const struct PdSequence *seq, struct PdSequenceInfo *out);

// Compensates recorded frame `frame` to the recorded camera pose of frame
// `frame + delay` and writes the result as 8-bit RGB into `rgb_out`
// (`width * height * 3` bytes required). If `holes_out` is non-null it
// receives the pre-inpainting hole mask, one byte per pixel, 255 where the
// renderer had no data (`width * height` bytes required). If
// `hole_fraction_out` is non-null it receives the hole fraction in [0, 1].
//
// # Safety
// `seq` must be a live handle and the buffers valid for their stated
// lengths.
enum PdStatus pd_compensate_to_recorded_pose(const struct PdSequence *seq,
                                             uint64_t frame,
                                             uint64_t delay,
                                             enum PdMethod method,
                                             uint8_t *rgb_out,
                                             size_t rgb_len,
                                             uint8_t *holes_out,
                                             size_t holes_len,
                                             double *hole_fraction_out);

// Integrates the sequence's recorded command stream to predict the robot's
// planar displacement from `from_time` over `horizon` seconds, writing the
// relative (x, y, heading) into `out`. A zero horizon yields the zero
// displacement.
//
// # Safety
// `seq` must be a live handle; `out` must be a valid pointer.
enum PdStatus pd_predict_planar_displacement(const struct PdSequence *seq,
                                             double from_time,
                                             double horizon,
                                             struct PdPlanarPose *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREDISPLAY_H */
