#ifndef DITOK_H
#define DITOK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DitokStatus {
  DITOK_STATUS_OK = 0,
  DITOK_STATUS_NULL_POINTER = 1,
  DITOK_STATUS_INVALID_ARGUMENT = 2,
  DITOK_STATUS_DIMENSION = 3,
  DITOK_STATUS_NUMERIC = 4,
  DITOK_STATUS_FORMAT = 5,
  DITOK_STATUS_IO = 6,
  DITOK_STATUS_CAPACITY = 7,
  DITOK_STATUS_BUFFER_TOO_SMALL = 8,
  DITOK_STATUS_INTERNAL = 9,
} DitokStatus;

/**
 * Opaque BPE model.
 */
typedef struct DitokBpe DitokBpe;

/**
 * Opaque k-means codebook.
 */
typedef struct DitokCodebook DitokCodebook;

/**
 * Word-level edit counts.
 */
typedef struct DitokWerStats {
  size_t substitutions;
  size_t deletions;
  size_t insertions;
  size_t ref_words;
} DitokWerStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * success. Valid until the next call on the same thread.
 */
const char *ditok_last_error(void);

/**
 * RNN-T loss of a `frames x (label_len + 1) x vocab` row-major log-prob
 * buffer. When `grad_out` is non-null it receives d loss / d log-probs in
 * the same layout.
 *
 * # Safety
 * Pointers must reference buffers of the stated sizes.
 */
enum DitokStatus ditok_rnnt_loss(const double *log_probs,
                                 size_t frames,
                                 size_t label_len,
                                 size_t vocab,
                                 const uint32_t *labels,
                                 uint32_t blank,
                                 double *loss_out,
                                 double *grad_out);

/**
 * Word error counts between two UTF-8 transcripts, after normalization.
 *
 * # Safety
 * `reference` and `hypothesis` must be nul-terminated strings.
 */
enum DitokStatus ditok_wer(const char *reference,
                           const char *hypothesis,
                           struct DitokWerStats *out);

/**
 * Loads a DSCB codebook.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum DitokStatus ditok_codebook_load(const char *path, struct DitokCodebook **out);

/**
 * # Safety
 * `cb` must come from [`ditok_codebook_load`] and not be freed yet.
 */
enum DitokStatus ditok_codebook_shape(const struct DitokCodebook *cb, size_t *k, size_t *dim);

/**
 * Nearest-centroid ids for `frames` row-major vectors of length `dim`.
 *
 * # Safety
 * `data` holds `frames * dim` floats, `out` room for `frames` ids.
 */
enum DitokStatus ditok_codebook_assign(const struct DitokCodebook *cb,
                                       const float *data,
                                       size_t frames,
                                       size_t dim,
                                       uint32_t *out);

/**
 * # Safety
 * `cb` must be null or an unfreed handle.
 */
void ditok_codebook_free(struct DitokCodebook *cb);

/**
 * Loads a BPE model saved as JSON.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum DitokStatus ditok_bpe_load(const char *path, struct DitokBpe **out);

/**
 * # Safety
 * `bpe` must be an unfreed handle.
 */
enum DitokStatus ditok_bpe_vocab_size(const struct DitokBpe *bpe, size_t *out);

/**
 * Encodes `text` into at most `cap` ids. `len` always receives the full
 * length; `DITOK_STATUS_BUFFER_TOO_SMALL` means retry with `cap >= *len`.
 *
 * # Safety
 * `ids` must have room for `cap` values.
 */
enum DitokStatus ditok_bpe_encode(const struct DitokBpe *bpe,
                                  const char *input,
                                  uint32_t *ids,
                                  size_t cap,
                                  size_t *len);

/**
 * Decodes ids into a nul-terminated string of at most `cap` bytes
 * including the terminator. `len` receives the string length without it.
 *
 * # Safety
 * `ids` holds `n` values, `buf` room for `cap` bytes.
 */
enum DitokStatus ditok_bpe_decode(const struct DitokBpe *bpe,
                                  const uint32_t *ids,
                                  size_t n,
                                  char *buf,
                                  size_t cap,
                                  size_t *len);

/**
 * # Safety
 * `bpe` must be null or an unfreed handle.
 */
void ditok_bpe_free(struct DitokBpe *bpe);

/**
 * Number of mel bands written per frame by [`ditok_fbank`].
 */
size_t ditok_fbank_dim(void);

/**
 * 25 ms / 10 ms log-mel fbank of 16 kHz PCM. `frames_out` receives the
 * frame count; `out` must hold `cap_frames * ditok_fbank_dim()` values.
 *
 * # Safety
 * `pcm` holds `n` samples, `out` room for `cap_frames` frames.
 */
enum DitokStatus ditok_fbank(const int16_t *pcm,
                             size_t n,
                             uint32_t sample_rate_hz,
                             float *out,
                             size_t cap_frames,
                             size_t *frames_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DITOK_H */
