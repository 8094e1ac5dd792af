#ifndef HSVT_H
#define HSVT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsvtStatus {
  HSVT_STATUS_OK = 0,
  HSVT_STATUS_NULL_POINTER = 1,
  HSVT_STATUS_INVALID_ARGUMENT = 2,
  HSVT_STATUS_IO = 3,
  HSVT_STATUS_PARSE = 4,
  HSVT_STATUS_SHAPE = 5,
  HSVT_STATUS_NON_FINITE = 6,
  HSVT_STATUS_DIVERGED = 7,
  HSVT_STATUS_BUFFER_TOO_SMALL = 8,
  HSVT_STATUS_PANIC = 9,
} HsvtStatus;

/**
 * Opaque detector with its recurrent state.
 */
typedef struct HsvtDetector HsvtDetector;

/**
 * Opaque time-sorted event stream.
 */
typedef struct HsvtEventStream HsvtEventStream;

/**
 * One detected box, top-left corner and size in pixels.
 */
typedef struct HsvtDetection {
  double x;
  double y;
  double w;
  double h;
  uint32_t class_id;
  double score;
} HsvtDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message (NUL-terminated, truncated
 * to `len`) into `buf`. Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t hsvt_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hsvt_version(void);

/**
 * Energy of `flops` dense operations at 4.6 pJ each, in mJ.
 */
double hsvt_energy_ann_mj(uint64_t flops);

/**
 * Energy of `sops` synaptic operations at 0.9 pJ each, in mJ.
 */
double hsvt_energy_snn_mj(uint64_t sops);

/**
 * `fr × T × FLOPs` rounded to whole operations.
 */
uint64_t hsvt_sops(double firing_rate, size_t timesteps, uint64_t flops);

/**
 * Read an event file (`.csv` or binary, chosen by extension).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HsvtStatus hsvt_event_stream_read(const char *path, struct HsvtEventStream **out);

/**
 * Build a stream from parallel arrays; `p` holds +1 or -1.
 *
 * # Safety
 * The four arrays must each hold `n` elements; `out` must be valid.
 */
enum HsvtStatus hsvt_event_stream_from_arrays(uint16_t width,
                                              uint16_t height,
                                              const uint64_t *t,
                                              const uint16_t *x,
                                              const uint16_t *y,
                                              const int8_t *p,
                                              size_t n,
                                              struct HsvtEventStream **out);

/**
 * # Safety
 * `stream` must be null or a live handle.
 */
size_t hsvt_event_stream_len(const struct HsvtEventStream *stream);

/**
 * # Safety
 * `stream` must be null or a handle not yet freed.
 */
void hsvt_event_stream_free(struct HsvtEventStream *stream);

/**
 * Number of `delta_t_ms` windows from t = 0 covering every event.
 *
 * # Safety
 * `stream` and `out` must be valid.
 */
enum HsvtStatus hsvt_window_count(const struct HsvtEventStream *stream,
                                  double delta_t_ms,
                                  size_t *out);

/**
 * Histogram window `window` into `buf`, laid out `[2·t_bins × H × W]`.
 * `buf_len` must be at least `2·t_bins·H·W`.
 *
 * # Safety
 * `stream` must be valid and `buf` valid for `buf_len` doubles.
 */
enum HsvtStatus hsvt_accumulate(const struct HsvtEventStream *stream,
                                double delta_t_ms,
                                size_t t_bins,
                                size_t window,
                                double *buf,
                                size_t buf_len);

/**
 * Create a detector from a TOML model config (null: the 64×64 desk-scale
 * model) with deterministic initial weights.
 *
 * # Safety
 * `config_toml` must be null or NUL-terminated; `out` must be valid.
 */
enum HsvtStatus hsvt_detector_new(const char *config_toml,
                                  uint64_t seed,
                                  struct HsvtDetector **out);

/**
 * # Safety
 * `det` must be valid and `path` NUL-terminated.
 */
enum HsvtStatus hsvt_detector_load_checkpoint(struct HsvtDetector *det, const char *path);

/**
 * Input channels the detector expects (`2·t_bins`).
 *
 * # Safety
 * `det` must be null or valid.
 */
size_t hsvt_detector_input_channels(const struct HsvtDetector *det);

/**
 * Forget the recurrent state (start of a new recording).
 *
 * # Safety
 * `det` must be valid.
 */
enum HsvtStatus hsvt_detector_reset(struct HsvtDetector *det);

/**
 * Run one window `[channels × h × w]` through the detector, advancing its
 * state, and write up to `cap` detections. `count` receives the number of
 * detections found; if it exceeds `cap` the status is `BufferTooSmall`,
 * the best `cap` are written and the state is still advanced.
 *
 * # Safety
 * `frame` must hold `channels·h·w` doubles, `out` `cap` entries.
 */
enum HsvtStatus hsvt_detector_detect(struct HsvtDetector *det,
                                     const double *frame,
                                     size_t channels,
                                     size_t h,
                                     size_t w,
                                     struct HsvtDetection *out,
                                     size_t cap,
                                     size_t *count);

/**
 * # Safety
 * `det` must be null or a handle not yet freed.
 */
void hsvt_detector_free(struct HsvtDetector *det);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSVT_H */
