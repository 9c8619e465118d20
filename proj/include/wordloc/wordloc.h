#ifndef WORDLOC_H
#define WORDLOC_H

/* C interface to the word localization library. Every call returns a
 * wl_status; on failure wl_last_error() describes the problem (per thread).
 * Strings returned through char** must be released with wl_string_free,
 * arrays with the matching *_free call. */

#include <stddef.h>

#if defined(WORDLOC_BUILDING_LIBRARY)
#define WL_API __attribute__((visibility("default")))
#else
#define WL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
    WL_OK = 0,
    WL_ERR_DOMAIN = 1, /* bad data, missing files, numerical failure */
    WL_ERR_USAGE = 2   /* invalid arguments or unwritable outputs */
} wl_status;

typedef struct wl_config wl_config;
typedef struct wl_model wl_model;
typedef struct wl_stream wl_stream;

typedef struct {
    int word;     /* lexicon index */
    double begin; /* samples */
    double end;
    double score;
} wl_event;

WL_API const char* wl_version(void);
WL_API const char* wl_last_error(void);
WL_API void wl_string_free(char* s);

/* Run configuration: flat key = value settings with defaults. */
WL_API wl_status wl_config_new(wl_config** out);
WL_API void wl_config_free(wl_config* config);
WL_API wl_status wl_config_load(wl_config* config, const char* path);
WL_API wl_status wl_config_set(wl_config* config, const char* key, const char* value);
WL_API wl_status wl_config_get(const wl_config* config, const char* key, char** value);
WL_API wl_status wl_config_dump(const wl_config* config, char** text);
/* Writes run_config.txt into dir. */
WL_API wl_status wl_config_write(const wl_config* config, const char* dir);

/* Writes a synthetic corpus into out_dir; summary is JSON. */
WL_API wl_status wl_generate(const wl_config* config, const char* out_dir, char** summary);

/* Called after each epoch with one CSV row of the training log. */
typedef void (*wl_epoch_fn)(const char* log_row, void* user);

/* Trains on the corpus train split, writing checkpoint.wlc, train_log.csv and
 * run_config.txt into out_dir. resume may be NULL. Afterwards λ is tuned on
 * the dev split (if present) and reported in the JSON summary. */
WL_API wl_status wl_train(const wl_config* config, const char* corpus_dir, const char* out_dir,
                          const char* resume, wl_epoch_fn on_epoch, void* user, char** summary);

WL_API wl_status wl_model_load(const char* path, wl_model** out);
WL_API void wl_model_free(wl_model* model);
/* JSON: backbone, receptive_field, stride, feature_dim, sample_rate, lexicon. */
WL_API wl_status wl_model_info(const wl_model* model, char** info);
WL_API int wl_model_sample_rate(const wl_model* model);
WL_API size_t wl_model_stride(const wl_model* model);
WL_API size_t wl_model_receptive_field(const wl_model* model);
WL_API const char* wl_model_word(const wl_model* model, int index);

/* Loads a 16-bit mono WAV. expected_rate 0 accepts any rate. */
WL_API wl_status wl_audio_load(const char* path, int expected_rate, double** samples, size_t* count, int* rate);
WL_API void wl_samples_free(double* samples);

WL_API wl_status wl_detect(const wl_model* model, const double* samples, size_t count, double lambda, double nms_iou,
                           wl_event** events, size_t* n_events);
WL_API void wl_events_free(wl_event* events);

/* Streaming detection; the concatenation of all pushes and the final flush
 * equals wl_detect on the whole signal. */
WL_API wl_status wl_stream_open(const wl_model* model, double lambda, double nms_iou, wl_stream** out);
WL_API wl_status wl_stream_push(wl_stream* stream, const double* samples, size_t count, wl_event** events,
                                size_t* n_events);
WL_API wl_status wl_stream_finish(wl_stream* stream, wl_event** events, size_t* n_events);
WL_API void wl_stream_free(wl_stream* stream);

/* Event records as TSV lines (optionally preceded by the header line). */
WL_API wl_status wl_format_events(const wl_model* model, const char* utterance, const wl_event* events, size_t n,
                                  int header, char** text);

/* Scores an event file against an alignment file. manifest may be NULL (all
 * truth utterances). report is JSON, table a human-readable summary. */
WL_API wl_status wl_evaluate(const wl_config* config, const char* truth, const char* events, const char* manifest,
                             char** report, char** table);

/* Per-keyword optimal thresholds and MTWV. The audio duration comes from
 * audio_seconds when positive, otherwise from the WAV files in audio_dir. */
WL_API wl_status wl_mtwv(const wl_config* config, const char* truth, const char* events, const char* keywords,
                         const char* manifest, double audio_seconds, const char* audio_dir, char** report,
                         char** table);

#ifdef __cplusplus
}
#endif

#endif
