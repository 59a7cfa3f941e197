#ifndef VIDSUM_H
#define VIDSUM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum VsStatus {
  VS_STATUS_OK = 0,
  VS_STATUS_NULL_POINTER = 1,
  VS_STATUS_INVALID_ARGUMENT = 2,
  VS_STATUS_OUT_OF_RANGE = 3,
  VS_STATUS_IO = 4,
  VS_STATUS_FORMAT = 5,
  VS_STATUS_SHAPE = 6,
  VS_STATUS_NON_FINITE = 7,
  VS_STATUS_BUFFER_TOO_SMALL = 8,
  VS_STATUS_INTERNAL = 9,
} VsStatus;

// A loaded dataset.
typedef struct VsDataset VsDataset;

// A loaded checkpoint.
typedef struct VsModel VsModel;

// Per-video scores produced by a model on a dataset.
typedef struct VsPredictions VsPredictions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *vs_version(void);

// Message of the last failed call on this thread, or null after a success.
// The pointer is valid until the next call into this library on the thread.
const char *vs_last_error(void);

// Loads a dataset from its manifest.
//
// # Safety
// `manifest_path` must be null or a NUL-terminated string; `out` must be
// null or writable.
enum VsStatus vs_dataset_load(const char *manifest_path, struct VsDataset **out);

// # Safety
// `ds` must be null or a handle from [`vs_dataset_load`] not yet freed.
void vs_dataset_free(struct VsDataset *ds);

// Number of videos.
//
// # Safety
// `ds` must be a live handle or null; `out` writable or null.
enum VsStatus vs_dataset_len(const struct VsDataset *ds, size_t *out);

// Borrowed view of one video's importance scores.
//
// # Safety
// `ds` must be a live handle or null; `out_ptr` and `out_len` writable or null.
enum VsStatus vs_dataset_importance(const struct VsDataset *ds,
                                    size_t video_index,
                                    const float **out_ptr,
                                    size_t *out_len);

// Loads a training checkpoint.
//
// # Safety
// Same contract as [`vs_dataset_load`].
enum VsStatus vs_model_load(const char *checkpoint_path, struct VsModel **out);

// # Safety
// `model` must be null or a handle from [`vs_model_load`] not yet freed.
void vs_model_free(struct VsModel *model);

// Scores every video of `ds`.
//
// # Safety
// `model` and `ds` must be live handles or null; `out` writable or null.
enum VsStatus vs_model_predict(const struct VsModel *model,
                               const struct VsDataset *ds,
                               struct VsPredictions **out);

// # Safety
// `preds` must be null or a handle from [`vs_model_predict`] not yet freed.
void vs_predictions_free(struct VsPredictions *preds);

// Borrowed view of the scores for the video at `video_index`.
//
// # Safety
// `preds` must be a live handle or null; `out_ptr` and `out_len` writable or null.
enum VsStatus vs_predictions_scores(const struct VsPredictions *preds,
                                    size_t video_index,
                                    const double **out_ptr,
                                    size_t *out_len);

// Mean summary score of `preds` against the importance in `ds`.
//
// # Safety
// Handles live or null; `out` writable or null.
enum VsStatus vs_predictions_summary_score(const struct VsPredictions *preds,
                                           const struct VsDataset *ds,
                                           size_t n_s,
                                           double *out);

// Indices of the `k` highest scores, ascending; ties go to the lower index.
// Writes `min(k, len)` indices into `out` (capacity `out_cap`) and the count
// into `out_written`.
//
// # Safety
// `scores` must point to `len` readable values (or be null when `len` is 0);
// `out` must have room for `out_cap` values; `out_written` writable or null.
enum VsStatus vs_top_k(const double *scores,
                       size_t len,
                       size_t k,
                       size_t *out,
                       size_t out_cap,
                       size_t *out_written);

// Summary ratio of one video: importance of the `n_s` submitted segments
// over the importance of the best `n_s` segments.
//
// # Safety
// `importance` must point to `len` values and `submission` to `n_s`
// values; `out` writable or null.
enum VsStatus vs_summary_ratio(const double *importance,
                               size_t len,
                               const size_t *submission,
                               size_t n_s,
                               double *out);

// Expected summary score of uniformly random `n_s`-subsets on `ds`, and the
// standard deviation of a single random submission's score.
//
// # Safety
// `ds` live or null; `out_mean` writable or null; `out_std` writable or null
// (null skips it).
enum VsStatus vs_baseline_exact(const struct VsDataset *ds,
                                size_t n_s,
                                double *out_mean,
                                double *out_std);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIDSUM_H */
