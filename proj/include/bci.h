/* Real-time imagined-speech EEG decoding engine: C API.
 *
 * All functions return a bci_status; on failure bci_last_error() carries a
 * message for the calling thread. Objects are opaque handles released with
 * their _free function. Heap strings returned through char** are released
 * with bci_string_free.
 */
#ifndef BCI_H
#define BCI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bci_status {
  BCI_OK = 0,
  BCI_E_USAGE = 1,   /* invalid arguments or call sequence */
  BCI_E_DATA = 2,    /* file/stream format or content problems */
  BCI_E_NUMERIC = 3, /* non-finite values or numeric breakdown */
  BCI_E_INTERNAL = 4
} bci_status;

const char* bci_version(void);
const char* bci_last_error(void);
void bci_string_free(char* s);

/* ---- datasets (BCIE container) ------------------------------------------ */

typedef struct bci_dataset bci_dataset;

typedef struct bci_synth_params {
  uint32_t channels;         /* default 64 */
  double fs_hz;              /* default 500 */
  uint32_t trials_per_class; /* default 100 */
  double snr;                /* signature scale vs unit noise, default 1.0 */
  uint64_t seed;             /* default 42 */
} bci_synth_params;

void bci_synth_params_init(bci_synth_params* p);

bci_status bci_dataset_synth(const bci_synth_params* p, bci_dataset** out);
bci_status bci_dataset_load(const char* path, bci_dataset** out);
bci_status bci_dataset_save(const bci_dataset* ds, const char* path);
void bci_dataset_free(bci_dataset* ds);

bci_status bci_dataset_info(const bci_dataset* ds, uint32_t* channels, double* fs_hz,
                            uint32_t* n_classes, uint32_t* n_trials,
                            uint32_t* samples_per_trial, uint32_t* baseline_samples);
bci_status bci_dataset_class_counts(const bci_dataset* ds, uint32_t* counts, uint32_t len);

/* ---- models (BCIM checkpoints) ------------------------------------------- */

typedef struct bci_model bci_model;

typedef struct bci_train_params {
  uint32_t base_width; /* default 8 */
  uint32_t batch_size; /* default 16 */
  uint32_t max_epochs; /* default 200 */
  uint64_t seed;       /* default 42 */
  double lr;           /* default 1e-3 */
  double val_fraction; /* default 0.2 */
  double w_ddpm, w_rec, w_ce; /* default 1, 1, 1 */
} bci_train_params;

void bci_train_params_init(bci_train_params* p);

bci_status bci_model_train(const bci_dataset* ds, const bci_train_params* p, bci_model** out);
bci_status bci_model_load(const char* path, bci_model** out);
bci_status bci_model_save(const bci_model* m, const char* path);
void bci_model_free(bci_model* m);

bci_status bci_model_param_count(const bci_model* m, uint64_t* count);
bci_status bci_model_classes(const bci_model* m, uint32_t* n_classes);
/* "train_threshold", "val_threshold", or "max_epochs"; loaded models report
 * the empty string. */
bci_status bci_model_stop_reason(const bci_model* m, char** reason);
/* epoch,loss,ddpm,rec,ce,train_acc,val_acc,ms */
bci_status bci_model_history_csv(const bci_model* m, char** csv);

/* Top-1..top-k accuracies overall and per class, plus the confusion matrix.
 * topk_overall has topk entries; topk_per_class is class-major with topk
 * entries per class; confusion is n_classes x n_classes, true class major. */
bci_status bci_model_evaluate(const bci_model* m, const bci_dataset* ds, uint32_t topk,
                              double* topk_overall, double* topk_per_class, int64_t* confusion);

/* ---- online sessions ------------------------------------------------------ */

typedef struct bci_session_report bci_session_report;

typedef struct bci_session_params {
  uint32_t n_trials; /* default 20 */
  uint64_t seed;     /* default 42 */
} bci_session_params;

void bci_session_params_init(bci_session_params* p);

/* Sample-driven replay of dataset trials through the streaming decode loop. */
bci_status bci_session_replay(const bci_model* m, const bci_dataset* ds,
                              const bci_session_params* p, bci_session_report** out);
/* Pulls wire-format frames from a TCP producer. */
bci_status bci_session_tcp(const bci_model* m, const char* host, uint16_t port,
                           const bci_session_params* p, bci_session_report** out);
void bci_session_report_free(bci_session_report* r);

bci_status bci_session_report_summary(const bci_session_report* r, double* top1, double* top2,
                                      double* latency_mean_ms, double* latency_p95_ms,
                                      uint32_t* dropped, uint32_t* n_rows);
bci_status bci_session_report_trial(const bci_session_report* r, uint32_t row, uint32_t* cued,
                                    int32_t* predicted, double* confidence, double* intensity,
                                    uint32_t* dropped);
bci_status bci_session_report_csv(const bci_session_report* r, char** csv);

/* ---- latency -------------------------------------------------------------- */

bci_status bci_model_benchmark(const bci_model* m, uint32_t n, uint64_t seed, double* mean_ms,
                               double* p50_ms, double* p95_ms, double* first_ms);

#ifdef __cplusplus
}
#endif

#endif /* BCI_H */
