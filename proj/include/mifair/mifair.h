/* C interface to the mifair library. All functions return a mifair_status;
 * on failure mifair_last_error() describes the problem (per thread). */
#ifndef MIFAIR_H
#define MIFAIR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MIFAIR_API __declspec(dllexport)
#else
#define MIFAIR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as process exit codes for the command-line tool. */
typedef enum {
  MIFAIR_OK = 0,
  MIFAIR_E_INPUT = 2,     /* malformed input, schema or config */
  MIFAIR_E_THRESHOLD = 3, /* fairness verdict failed */
  MIFAIR_E_COVERAGE = 4,  /* a batch lacked a subgroup or condition */
  MIFAIR_E_INTERNAL = 5   /* divergence, self-check failure, unexpected error */
} mifair_status;

typedef struct mifair_dataset mifair_dataset;
typedef struct mifair_model mifair_model;
typedef struct mifair_predictions mifair_predictions;

MIFAIR_API const char* mifair_version(void);
MIFAIR_API const char* mifair_last_error(void);
/* Frees strings returned through char** out-parameters. */
MIFAIR_API void mifair_string_free(char* s);

/* Loads a CSV. `schema_path` may be NULL when `model` carries its schema;
 * with a model, the checkpoint's encoding (categories, standardization)
 * is reused so features line up with training. */
MIFAIR_API int mifair_dataset_load(const char* csv_path, const char* schema_path, const mifair_model* model,
                                   mifair_dataset** out);
MIFAIR_API void mifair_dataset_free(mifair_dataset* ds);
MIFAIR_API size_t mifair_dataset_rows(const mifair_dataset* ds);
MIFAIR_API size_t mifair_dataset_classes(const mifair_dataset* ds);
MIFAIR_API size_t mifair_dataset_groups(const mifair_dataset* ds);

MIFAIR_API int mifair_model_load(const char* checkpoint_path, mifair_model** out);
MIFAIR_API void mifair_model_free(mifair_model* model);
MIFAIR_API int mifair_model_predict(const mifair_model* model, const mifair_dataset* ds, mifair_predictions** out);

/* Per-row class probabilities; the header must list the dataset's class
 * names in order and there must be one row per dataset row. */
MIFAIR_API int mifair_predictions_load(const char* csv_path, const mifair_dataset* ds, mifair_predictions** out);
/* Row-major rows x classes probabilities. */
MIFAIR_API int mifair_predictions_from_array(const double* probs, size_t rows, size_t classes,
                                             mifair_predictions** out);
MIFAIR_API void mifair_predictions_free(mifair_predictions* pred);

typedef struct {
  const char* notions; /* comma-separated notion names, NULL or "" for all */
  int normalize;
  int hard;            /* iota on one-hot argmax rows */
  double threshold;    /* verdict threshold s; <= 0 disables the verdict */
  double lambda0;      /* EOdds weights; <= 0 selects 1 */
  double lambda1;
  int class_index;     /* < 0 selects the default */
} mifair_assess_options;

MIFAIR_API void mifair_assess_defaults(mifair_assess_options* opts);

/* Writes the flat report CSV. With a threshold, *verdict is 1 (pass) or 0
 * and a failing verdict returns MIFAIR_E_THRESHOLD after writing the
 * report; without one *verdict is -1. `verdict` may be NULL. */
MIFAIR_API int mifair_assess(const mifair_dataset* ds, const mifair_predictions* pred, const mifair_assess_options* opts,
                             const char* report_path, int* verdict);

/* Plug-in MI (nats) of a row-major joint table and entropy of a distribution. */
MIFAIR_API int mifair_mutual_information(const double* joint, size_t rows, size_t cols, double* out);
MIFAIR_API int mifair_entropy(const double* dist, size_t n, double* out);

typedef struct {
  const char* data_path;   /* overrides data.path; NULL keeps the config */
  const char* schema_path; /* overrides the schema section */
  int has_seed;
  uint64_t seed;           /* training seed override */
  size_t jobs;             /* sweep workers; 0 = config / MIFAIR_JOBS / hardware */
  double threshold;        /* sweep threshold override; <= 0 keeps the config */
} mifair_run_options;

MIFAIR_API void mifair_run_defaults(mifair_run_options* opts);

/* Writes model.ckpt, trace.csv, report.csv and manifest.json into out_dir. */
MIFAIR_API int mifair_run_train(const char* config_path, const char* out_dir, const mifair_run_options* opts);
/* Writes trials.csv, aggregates.csv, summary.txt and manifest.json. */
MIFAIR_API int mifair_run_sweep(const char* config_path, const char* out_dir, const mifair_run_options* opts);

/* Runs the oracle batteries; *summary (may be NULL) receives the text.
 * Returns MIFAIR_E_INTERNAL when any battery fails. */
MIFAIR_API int mifair_selfcheck(uint64_t seed, char** summary);

#ifdef __cplusplus
}
#endif

#endif
