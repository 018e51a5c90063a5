#ifndef CELIF_H
#define CELIF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CELIF_API __declspec(dllexport)
#else
#define CELIF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum celif_status {
  CELIF_OK = 0,
  CELIF_ERR_ARGUMENT = 1,
  CELIF_ERR_DIMENSION = 2,
  CELIF_ERR_CONFIG = 3,
  CELIF_ERR_DYNAMICS = 4,
  CELIF_ERR_GRADIENT = 5,
  CELIF_ERR_TRAINING = 6,
  CELIF_ERR_PARSE = 7,
  CELIF_ERR_CHECKPOINT = 8,
  CELIF_ERR_IO = 9,
  CELIF_ERR_BUFFER = 10, /* output buffer too small; *needed holds the size */
  CELIF_ERR_INTERNAL = 11
} celif_status;

typedef struct celif_config celif_config;
typedef struct celif_model celif_model;

CELIF_API const char* celif_version(void);
CELIF_API const char* celif_status_name(celif_status status);
/* Message of the most recent failure on the calling thread. */
CELIF_API const char* celif_last_error(void);

/* Configuration: flat key = value settings. */
CELIF_API celif_status celif_config_new(celif_config** out);
CELIF_API celif_status celif_config_parse(const char* text, celif_config** out);
CELIF_API celif_status celif_config_load(const char* path, celif_config** out);
CELIF_API void celif_config_free(celif_config* config);
CELIF_API celif_status celif_config_set(celif_config* config, const char* key, const char* value);
/* String outputs copy into buf (NUL-terminated) when cap suffices and always
 * report the required size, including the terminator, through *needed. */
CELIF_API celif_status celif_config_get(const celif_config* config, const char* key, char* buf, size_t cap,
                                        size_t* needed);
CELIF_API celif_status celif_config_text(const celif_config* config, char* buf, size_t cap, size_t* needed);
CELIF_API celif_status celif_config_validate(const celif_config* config);
/* Enumerates the recognised keys; returns NULL past the end. */
CELIF_API size_t celif_config_key_count(void);
CELIF_API const char* celif_config_key_name(size_t index);

typedef struct celif_train_result {
  uint64_t iterations;
  double last_loss;
  double last_metric;
  int has_eval;
  double eval_loss;
  double eval_metric;
  int early_stopped;
} celif_train_result;

/* Trains into the config's out_dir. verbose != 0 prints progress to stderr. */
CELIF_API celif_status celif_train(const celif_config* config, int verbose, celif_train_result* result);

/* Models. */
CELIF_API celif_status celif_model_init(const celif_config* config, celif_model** out);
CELIF_API celif_status celif_model_load(const char* path, celif_model** out);
CELIF_API celif_status celif_model_save(const celif_model* model, const char* path);
CELIF_API void celif_model_free(celif_model* model);
CELIF_API celif_status celif_model_parameter_count(const celif_model* model, uint64_t* out);
CELIF_API celif_status celif_model_layer_count(const celif_model* model, size_t* out);
CELIF_API celif_status celif_model_seq_len(const celif_model* model, size_t* out);
/* Copy of the configuration stored with the model; free with celif_config_free. */
CELIF_API celif_status celif_model_config(const celif_model* model, celif_config** out);
/* Changes a stored config key that does not alter the architecture
 * (data_root, eval_batch, probe_batch, seed for probe sampling, ...). */
CELIF_API celif_status celif_model_set(celif_model* model, const char* key, const char* value);
CELIF_API celif_status celif_model_evaluate(const celif_model* model, double* loss, double* metric);

/* Gradient probe on `layer` (0-based). Writes grad_probe.csv and
 * grad_probe_steps.csv into out_dir when it is non-NULL. step_sums receives
 * up to cap per-timestep sums; *steps reports T. */
CELIF_API celif_status celif_probe_gradients(const celif_model* model, size_t layer, const char* out_dir,
                                             double* step_sums, size_t cap, size_t* steps, double* raw_total);

/* Cosine similarity of the TE rows used by `layer`. Writes the [T x T]
 * matrix to csv_path when non-NULL; lag_means receives mean similarity at
 * lags 0..cap-1. */
CELIF_API celif_status celif_te_similarity(const celif_model* model, size_t layer, const char* csv_path,
                                           double* lag_means, size_t cap, size_t* steps);

typedef struct celif_energy_layer {
  size_t m;
  size_t n;
  double fr_in;
  double fr_out;
} celif_energy_layer;

typedef struct celif_energy_report {
  double per_step_pj;
  double readout_pj;
  double total_nj;
} celif_energy_report;

/* family: "lstm", "lif", "alif" or "celif". readout may be NULL; its fr_out
 * is ignored. layer_pj, when non-NULL, receives count per-layer values. */
CELIF_API celif_status celif_energy(const char* family, const celif_energy_layer* layers, size_t count,
                                    const celif_energy_layer* readout, size_t timesteps, double e_ac_pj,
                                    double e_mac_pj, double* layer_pj, celif_energy_report* report);

/* Reference models (index 0..count-1: lstm, lif, alif, celif) evaluated with
 * the given timesteps and operation energies. reported_nj is the published
 * figure for comparison. */
CELIF_API size_t celif_energy_reference_count(void);
CELIF_API celif_status celif_energy_reference(size_t index, size_t timesteps, double e_ac_pj, double e_mac_pj,
                                              const char** family, celif_energy_report* report, double* reported_nj);

/* Synthetic tasks: one batch as CSV. Pixel tasks: synthetic IDX files. */
CELIF_API celif_status celif_gen_data(const celif_config* config, size_t count, const char* out_dir);

CELIF_API celif_status celif_baseline_loss(const char* task, size_t seq_len, double* out);
CELIF_API celif_status celif_eval_checkpoint(const char* path, double* loss, double* metric);
/* Text listing of a checkpoint (header, config, per-tensor stats and hash). */
CELIF_API celif_status celif_checkpoint_describe(const char* path, char* buf, size_t cap, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif
