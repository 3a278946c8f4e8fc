#ifndef DCFDS_H
#define DCFDS_H

/* Generated by cbindgen from the dcfds-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  DCFDS_STATUS_OK = 0,
  DCFDS_STATUS_NULL_POINTER = 1,
  DCFDS_STATUS_INVALID_UTF8 = 2,
  DCFDS_STATUS_INVALID_ARGUMENT = 3,
  DCFDS_STATUS_IO = 4,
  DCFDS_STATUS_PARSE = 5,
  DCFDS_STATUS_RUNTIME = 6,
} DcfdsStatus;

/**
 * Pipeline configuration handle.
 */
typedef struct DcfdsConfig DcfdsConfig;

/**
 * Global diarization prior handle.
 */
typedef struct DcfdsPrior DcfdsPrior;

/**
 * Decoding output handle: separated streams plus the priors involved.
 */
typedef struct DcfdsResult DcfdsResult;

/**
 * Mono waveform handle.
 */
typedef struct DcfdsWaveform DcfdsWaveform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the most recent failure on this thread into
 * `buf` (NUL-terminated, truncated to `cap`). Returns the full message
 * length in bytes, excluding the NUL.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (query mode).
 */
uintptr_t dcfds_last_error(char *buf, uintptr_t cap);

/**
 * Frees a string previously returned by this library.
 *
 * # Safety
 * `s` must come from a dcfds function and not already be freed.
 */
void dcfds_string_free(char *s);

/**
 * Reads a mono 16-bit PCM WAV at the expected sample rate.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is a valid out-pointer.
 */
DcfdsStatus dcfds_waveform_from_wav(const char *path, uint32_t expected_rate, DcfdsWaveform **out);

/**
 * Wraps a sample buffer (copied) as a waveform.
 *
 * # Safety
 * `samples` points to `len` readable doubles; `out` is valid.
 */
DcfdsStatus dcfds_waveform_from_samples(const double *samples,
                                        uintptr_t len,
                                        uint32_t sample_rate,
                                        DcfdsWaveform **out);

/**
 * # Safety
 * `w` is a live waveform handle.
 */
uintptr_t dcfds_waveform_len(const DcfdsWaveform *w);

/**
 * # Safety
 * `w` is a live waveform handle.
 */
uint32_t dcfds_waveform_sample_rate(const DcfdsWaveform *w);

/**
 * Copies up to `cap` samples into `buf`; returns the signal length.
 *
 * # Safety
 * `w` is live; `buf` points to `cap` writable doubles or is null.
 */
uintptr_t dcfds_waveform_copy_samples(const DcfdsWaveform *w, double *buf, uintptr_t cap);

/**
 * Writes the waveform as mono 16-bit PCM.
 *
 * # Safety
 * `w` is live; `path` is NUL-terminated.
 */
DcfdsStatus dcfds_waveform_write_wav(const DcfdsWaveform *w, const char *path);

/**
 * # Safety
 * `w` came from this library and is freed exactly once.
 */
void dcfds_waveform_free(DcfdsWaveform *w);

/**
 * Parses an RTTM document into a frame-quantized prior.
 *
 * # Safety
 * `text` is NUL-terminated; `out` is valid.
 */
DcfdsStatus dcfds_prior_from_rttm_text(const char *text, double frame_hop_secs, DcfdsPrior **out);

/**
 * Reads an RTTM file into a frame-quantized prior.
 *
 * # Safety
 * `path` is NUL-terminated; `out` is valid.
 */
DcfdsStatus dcfds_prior_from_rttm_file(const char *path, double frame_hop_secs, DcfdsPrior **out);

/**
 * # Safety
 * `p` is a live prior handle.
 */
uintptr_t dcfds_prior_num_speakers(const DcfdsPrior *p);

/**
 * # Safety
 * `p` is a live prior handle.
 */
uintptr_t dcfds_prior_num_frames(const DcfdsPrior *p);

/**
 * Renders the prior as RTTM at `path` with the given recording id.
 *
 * # Safety
 * `p` is live; `path` and `file_id` are NUL-terminated.
 */
DcfdsStatus dcfds_prior_write_rttm(const DcfdsPrior *p, const char *file_id, const char *path);

/**
 * # Safety
 * `p` came from this library and is freed exactly once.
 */
void dcfds_prior_free(DcfdsPrior *p);

/**
 * Default pipeline configuration.
 *
 * # Safety
 * `out` is a valid out-pointer.
 */
DcfdsStatus dcfds_config_default(DcfdsConfig **out);

/**
 * Parses a config JSON document (defaults applied, unknown keys rejected).
 *
 * # Safety
 * `json` is NUL-terminated; `out` is valid.
 */
DcfdsStatus dcfds_config_from_json(const char *json, DcfdsConfig **out);

/**
 * Loads a config JSON file.
 *
 * # Safety
 * `path` is NUL-terminated; `out` is valid.
 */
DcfdsStatus dcfds_config_from_file(const char *path, DcfdsConfig **out);

/**
 * # Safety
 * `c` came from this library and is freed exactly once.
 */
void dcfds_config_free(DcfdsConfig *c);

/**
 * Separates a mixture guided by a diarization prior. `oracle_dir` may be
 * null unless the configuration uses oracle estimator kinds; when given,
 * it must hold clean per-speaker `spk<NN>.wav` files.
 *
 * # Safety
 * All handles are live; `oracle_dir` is null or NUL-terminated; `out` is
 * a valid out-pointer.
 */
DcfdsStatus dcfds_decode(const DcfdsWaveform *mix,
                         const DcfdsPrior *prior,
                         const DcfdsConfig *config,
                         const char *oracle_dir,
                         DcfdsResult **out);

/**
 * # Safety
 * `r` is a live result handle.
 */
uintptr_t dcfds_result_num_speakers(const DcfdsResult *r);

/**
 * Copies one separated stream out as a new waveform handle.
 *
 * # Safety
 * `r` is live; `out` is a valid out-pointer.
 */
DcfdsStatus dcfds_result_waveform(const DcfdsResult *r, uintptr_t index, DcfdsWaveform **out);

/**
 * Copies the refreshed prior out of a decode that ran re-clustering.
 * Fails with `INVALID_ARGUMENT` when no re-clustering round ran.
 *
 * # Safety
 * `r` is live; `out` is a valid out-pointer.
 */
DcfdsStatus dcfds_result_refreshed_prior(const DcfdsResult *r, DcfdsPrior **out);

/**
 * Writes per-speaker WAVs (`spk<NN>.wav`) and the final prior RTTM into
 * a directory, creating it if needed.
 *
 * # Safety
 * `r` is live; `dir` is NUL-terminated.
 */
DcfdsStatus dcfds_result_write_dir(const DcfdsResult *r, const char *dir);

/**
 * # Safety
 * `r` came from this library and is freed exactly once.
 */
void dcfds_result_free(DcfdsResult *r);

/**
 * Scores hypothesis transcripts against references (both JSON files) and
 * returns a JSON report string (`cpwer`, `tcpwer`) to free with
 * `dcfds_string_free`.
 *
 * # Safety
 * Paths are NUL-terminated; `out_json` is a valid out-pointer.
 */
DcfdsStatus dcfds_evaluate_transcripts(const char *ref_path,
                                       const char *hyp_path,
                                       double collar_secs,
                                       char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCFDS_H */
