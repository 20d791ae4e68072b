#ifndef DIARKIT_H
#define DIARKIT_H

/* C surface over the diarization core. Every entry point returns one of the
 * DIAR_* status codes; on failure diar_last_error() holds a message for the
 * calling thread. Strings handed back through char** are malloc'd and belong
 * to the caller; release them with diar_free_string. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define DIAR_OK 0
#define DIAR_ERR_CONFIG 1
#define DIAR_ERR_DATA 2
#define DIAR_ERR_NUMERIC 3

/* message from the most recent failing call on this thread, never NULL */
const char* diar_last_error(void);

void diar_free_string(char* s);

/* Resolved value of one config key after the file and overrides apply.
 * config_path may be NULL for defaults. */
int diar_config_get(const char* config_path, const char* const* overrides, size_t n_overrides,
                    const char* key, char** value_out);

/* Every config key as "key = value" lines; feeding the text back in as a
 * config file reproduces the same configuration. */
int diar_config_dump(const char* config_path, const char* const* overrides, size_t n_overrides,
                     char** text_out);

/* Synthesizes a wav+rttm dataset under out_dir and writes manifest.tsv.
 * config_path may be NULL for defaults; overrides are "key=value" entries
 * applied on top. manifest_out receives the manifest path, stats_out a
 * one-row table (files, hours, overlap) describing the result. */
int diar_simulate(const char* config_path, const char* const* overrides, size_t n_overrides,
                  const char* out_dir, char** manifest_out, char** stats_out);

/* Runs the two phase training loop over the manifest. resume_state may name
 * a .state snapshot to continue from, or be NULL for a fresh run. report_out
 * receives "key value" lines: final_checkpoint, phase1_checkpoint, log,
 * steps, skipped, max_lr. */
int diar_train(const char* config_path, const char* const* overrides, size_t n_overrides,
               const char* manifest_path, const char* out_dir, const char* resume_state,
               char** report_out);

typedef struct diar_model diar_model;

int diar_model_open(const char* checkpoint_path, diar_model** out);
void diar_model_close(diar_model* m);

/* "key value" lines describing the loaded checkpoint */
int diar_model_info(diar_model* m, char** info_out);

/* Diarizes input_path, which is either a RIFF wav or a DIARBIN feature file
 * (sniffed by magic), and writes hypothesis segments for `recording` to
 * rttm_out. median_window 0 disables smoothing, otherwise it must be odd.
 * report_out (optional, may be NULL) receives "key value" lines. */
int diar_infer(diar_model* m, const char* input_path, const char* recording, double threshold,
               size_t median_window, const char* rttm_out, char** report_out);

/* DER of hyp against ref at the given collar; report_out receives the
 * per-recording table plus the TOTAL row. */
int diar_score(const char* ref_rttm, const char* hyp_rttm, double collar, char** report_out);

/* Encodes input_path (first chunk_len frames) and reports per-head attention
 * traces for one encoder layer (1-based; 0 means the topmost layer).
 * When dump_prefix is non-NULL each head's T x T matrix is written to
 * "<dump_prefix>_l<layer>_h<head>.bin" as a DIARBIN matrix. */
int diar_inspect_attention(diar_model* m, const char* input_path, size_t layer,
                           const char* dump_prefix, char** report_out);

#ifdef __cplusplus
}
#endif

#endif /* DIARKIT_H */
