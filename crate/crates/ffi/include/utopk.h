#ifndef UTOPK_H
#define UTOPK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UtopkStatus {
  UTOPK_STATUS_OK = 0,
  UTOPK_STATUS_NULL_POINTER = 1,
  UTOPK_STATUS_INVALID_ARGUMENT = 2,
  UTOPK_STATUS_INVALID_GRID = 3,
  UTOPK_STATUS_INVALID_MIXTURE = 4,
  UTOPK_STATUS_DUPLICATE_FRAME = 5,
  UTOPK_STATUS_UNKNOWN_FRAME = 6,
  UTOPK_STATUS_ALREADY_CERTAIN = 7,
  UTOPK_STATUS_NOT_UNCERTAIN = 8,
  UTOPK_STATUS_INSUFFICIENT_CERTAIN = 9,
  UTOPK_STATUS_INSUFFICIENT_FRAMES = 10,
  UTOPK_STATUS_BUFFER_TOO_SMALL = 11,
  UTOPK_STATUS_ORACLE_FAILED = 12,
  UTOPK_STATUS_INTERNAL = 13,
  UTOPK_STATUS_PANIC = 14,
} UtopkStatus;

/**
 * Collects tuples for a relation on one score grid.
 */
typedef struct UtopkBuilder UtopkBuilder;

typedef struct UtopkRelation UtopkRelation;

/**
 * Scores `n` frames: writes `n` values to `scores` and returns 0, or non-zero on failure.
 */
typedef int32_t (*UtopkOracleFn)(void *user_data,
                                 const uint64_t *frame_ids,
                                 size_t n,
                                 double *scores);

/**
 * Query results.
 */
typedef struct UtopkQueryResult {
  double confidence;
  uint64_t iterations;
  uint64_t frames_cleaned;
  uint64_t oracle_batches;
} UtopkQueryResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *utopk_last_error(void);

/**
 * New builder on the grid `origin + i * step`, `i < bins`. With `counting`, mass
 * below the origin folds into the first bin.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum UtopkStatus utopk_builder_new(double origin,
                                   double step,
                                   size_t bins,
                                   bool counting,
                                   struct UtopkBuilder **out);

/**
 * Adds an uncertain frame with probabilities `probs[i]` on bin `first_bin + i`.
 *
 * # Safety
 * `builder` must come from `utopk_builder_new`; `probs` must hold `n` values.
 */
enum UtopkStatus utopk_builder_add_uncertain(struct UtopkBuilder *builder,
                                             uint64_t frame_id,
                                             int64_t timestamp,
                                             int64_t first_bin,
                                             const double *probs,
                                             size_t n);

/**
 * Adds an uncertain frame from a Gaussian mixture, quantized onto the builder's grid.
 *
 * # Safety
 * `builder` must come from `utopk_builder_new`; each array must hold `n` values.
 */
enum UtopkStatus utopk_builder_add_mixture(struct UtopkBuilder *builder,
                                           uint64_t frame_id,
                                           int64_t timestamp,
                                           const double *weights,
                                           const double *means,
                                           const double *sds,
                                           size_t n);

/**
 * Adds a frame whose score bin is already known.
 *
 * # Safety
 * `builder` must come from `utopk_builder_new`.
 */
enum UtopkStatus utopk_builder_add_certain(struct UtopkBuilder *builder,
                                           uint64_t frame_id,
                                           int64_t timestamp,
                                           int64_t bin);

/**
 * Consumes the builder and creates a relation. The builder is freed even on failure.
 *
 * # Safety
 * `builder` must come from `utopk_builder_new` and not be used afterwards; `out` must be valid.
 */
enum UtopkStatus utopk_builder_build(struct UtopkBuilder *builder, struct UtopkRelation **out);

/**
 * # Safety
 * `builder` must come from `utopk_builder_new` or be null.
 */
void utopk_builder_free(struct UtopkBuilder *builder);

/**
 * # Safety
 * `relation` must come from `utopk_builder_build` or be null.
 */
void utopk_relation_free(struct UtopkRelation *relation);

/**
 * Number of frames and of still-uncertain frames.
 *
 * # Safety
 * `relation` must be valid; the out pointers may be null.
 */
enum UtopkStatus utopk_relation_counts(const struct UtopkRelation *relation,
                                       size_t *total,
                                       size_t *uncertain);

/**
 * Records the oracle's exact bin for an uncertain frame.
 *
 * # Safety
 * `relation` must be valid.
 */
enum UtopkStatus utopk_relation_clean(struct UtopkRelation *relation,
                                      uint64_t frame_id,
                                      int64_t bin);

/**
 * Certain Top-K by descending bin, ties by frame id. Writes `k` entries.
 *
 * # Safety
 * `relation` must be valid; `ids` and `bins` must hold `capacity` values.
 */
enum UtopkStatus utopk_relation_topk(const struct UtopkRelation *relation,
                                     size_t k,
                                     uint64_t *ids,
                                     int64_t *bins,
                                     size_t capacity);

/**
 * Confidence that the certain Top-K is the exact Top-K.
 *
 * # Safety
 * `relation` and `out` must be valid.
 */
enum UtopkStatus utopk_relation_topk_prob(const struct UtopkRelation *relation,
                                          size_t k,
                                          double *out);

/**
 * Expected confidence of the certain Top-K after cleaning `frame_id`.
 *
 * # Safety
 * `relation` and `out` must be valid.
 */
enum UtopkStatus utopk_relation_expected_conf(const struct UtopkRelation *relation,
                                              size_t k,
                                              uint64_t frame_id,
                                              double *out);

/**
 * Cleans frames through `oracle` until the certain Top-K reaches `thres`
 * confidence, then writes the answer. Oracle scores are rounded to the grid.
 *
 * # Safety
 * `relation` must be valid; `ids` and `bins` must hold `capacity` values;
 * `oracle` must be safe to call with `user_data`; `result` may be null.
 */
enum UtopkStatus utopk_run_query(struct UtopkRelation *relation,
                                 size_t k,
                                 double thres,
                                 size_t batch,
                                 UtopkOracleFn oracle,
                                 void *user_data,
                                 uint64_t *ids,
                                 int64_t *bins,
                                 size_t capacity,
                                 struct UtopkQueryResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UTOPK_H */
