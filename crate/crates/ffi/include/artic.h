#ifndef ARTIC_H
#define ARTIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ArticStatus {
  ARTIC_STATUS_OK = 0,
  ARTIC_STATUS_NULL_POINTER = 1,
  ARTIC_STATUS_INVALID_ARGUMENT = 2,
  ARTIC_STATUS_INVALID_UTF8 = 3,
  ARTIC_STATUS_CONFIG = 4,
  ARTIC_STATUS_NOT_FOUND = 5,
  ARTIC_STATUS_MAP_FORMAT = 6,
  ARTIC_STATUS_IO = 7,
  ARTIC_STATUS_PANIC = 8,
} ArticStatus;

/**
 * Opaque loss-adaptive rate controller.
 */
typedef struct ArticController ArticController;

/**
 * Opaque correlation map.
 */
typedef struct ArticCorrelationMap ArticCorrelationMap;

typedef struct ArticRateDecision {
  /**
   * Capture rate in frames per second.
   */
  double rate;
  /**
   * Frames per MLLM sampling interval.
   */
  uint32_t k;
  /**
   * True when `r_max` capped the rate below the reliability target.
   */
  bool residual_violation;
} ArticRateDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *artic_last_error(void);

/**
 * Cosine similarity of two `len`-element vectors.
 *
 * # Safety
 * `a` and `b` must point to `len` readable doubles; `out` must be writable.
 */
enum ArticStatus artic_cosine_similarity(const double *a, const double *b, size_t len, double *out);

/**
 * QP in `[0, 51]` for correlation `rho` and exponent `gamma`.
 *
 * # Safety
 * `out` must be writable.
 */
enum ArticStatus artic_qp_from_correlation(double rho, double gamma, uint8_t *out);

/**
 * Bits of one patch at `qp` under the exponential rate model.
 *
 * # Safety
 * `out` must be writable.
 */
enum ArticStatus artic_patch_bits(uint8_t qp,
                                  double ref_bits_per_patch,
                                  uint8_t ref_qp,
                                  double halving_step,
                                  double *out);

/**
 * Minimum capture rate meeting the `1 - eps` group delivery target.
 *
 * # Safety
 * `out` must be writable.
 */
enum ArticStatus artic_select_frame_rate(double p,
                                         double kappa,
                                         double mllm_rate,
                                         double eps,
                                         double r_max,
                                         struct ArticRateDecision *out);

/**
 * Builds a map from `rows * cols` row-major values in `[-1, 1]`.
 *
 * # Safety
 * `values` must point to `len` readable floats; `out` must be writable.
 */
enum ArticStatus artic_map_new(size_t rows,
                               size_t cols,
                               uint16_t patch_size,
                               const float *values,
                               size_t len,
                               struct ArticCorrelationMap **out);

/**
 * Reads a correlation-map file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ArticStatus artic_map_load(const char *path, struct ArticCorrelationMap **out);

/**
 * Writes `map` as a correlation-map file.
 *
 * # Safety
 * `map` must come from this library; `path` must be a NUL-terminated string.
 */
enum ArticStatus artic_map_save(const struct ArticCorrelationMap *map, const char *path);

/**
 * # Safety
 * `map` must come from this library; output pointers must be writable.
 */
enum ArticStatus artic_map_dims(const struct ArticCorrelationMap *map,
                                size_t *rows,
                                size_t *cols,
                                uint16_t *patch_size);

/**
 * Releases a map. Null is ignored.
 *
 * # Safety
 * `map` must come from this library and not be used afterwards.
 */
void artic_map_free(struct ArticCorrelationMap *map);

/**
 * Per-patch QPs and total bits of one frame coded with `map`.
 *
 * `qp_out` may be null; otherwise it must hold `rows * cols` bytes, given
 * in `qp_len`.
 *
 * # Safety
 * `map` must come from this library; `total_bits` must be writable;
 * `qp_out`, when non-null, must point to `qp_len` writable bytes.
 */
enum ArticStatus artic_frame_budget(const struct ArticCorrelationMap *map,
                                    double gamma,
                                    double ref_bits_per_patch,
                                    uint8_t ref_qp,
                                    double halving_step,
                                    double *total_bits,
                                    uint8_t *qp_out,
                                    size_t qp_len);

/**
 * Creates a controller with the given parameters; others take defaults.
 *
 * # Safety
 * `out` must be writable.
 */
enum ArticStatus artic_controller_new(double mllm_rate,
                                      double eps,
                                      double r_max,
                                      double alpha,
                                      struct ArticController **out);

/**
 * Feeds one epoch of loss feedback and the sizes of frames sent in it.
 *
 * # Safety
 * `ctrl` must come from this library; `frame_sizes_bits` must point to
 * `n_frames` doubles (or be null with `n_frames == 0`); `out` must be
 * writable.
 */
enum ArticStatus artic_controller_on_epoch(struct ArticController *ctrl,
                                           uint64_t acked,
                                           uint64_t lost,
                                           const double *frame_sizes_bits,
                                           size_t n_frames,
                                           double mtu_payload_bits,
                                           struct ArticRateDecision *out);

/**
 * Current loss estimate of the controller.
 *
 * # Safety
 * `ctrl` must come from this library; `out` must be writable.
 */
enum ArticStatus artic_controller_loss(const struct ArticController *ctrl, double *out);

/**
 * Releases a controller. Null is ignored.
 *
 * # Safety
 * `ctrl` must come from this library and not be used afterwards.
 */
void artic_controller_free(struct ArticController *ctrl);

/**
 * Runs the scenario config at `config_path` for every configured seed and
 * returns the CSV (header included) in `*csv_out`. Free it with
 * [`artic_string_free`].
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `csv_out` must be writable.
 */
enum ArticStatus artic_run_scenario(const char *config_path, uint32_t parallel, char **csv_out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void artic_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARTIC_H */
