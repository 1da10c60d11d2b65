#ifndef EEGSHIELD_H
#define EEGSHIELD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Condition codes for [`es_eval_loso`].
 */
#define ES_CONDITION_SAMPLE_WISE 0

#define ES_CONDITION_USER_WISE 1

typedef enum EsStatus {
  ES_STATUS_OK = 0,
  ES_STATUS_NULL_POINTER = 1,
  ES_STATUS_INVALID_ARGUMENT = 2,
  ES_STATUS_NUMERICAL = 3,
  ES_STATUS_FORMAT = 4,
  ES_STATUS_CORRUPTION = 5,
  ES_STATUS_VALIDATION = 6,
  ES_STATUS_PROTOCOL = 7,
  ES_STATUS_IO = 8,
  ES_STATUS_PANIC = 9,
} EsStatus;

typedef struct EsDataset EsDataset;

typedef struct EsPerturbation EsPerturbation;

typedef struct EsReport EsReport;

typedef struct EsSynthConfig {
  size_t users;
  size_t sessions;
  size_t trials_per_user_per_session;
  size_t channels;
  size_t len;
  size_t classes;
  double identity_amplitude;
  double task_amplitude;
  double session_amplitude;
  double noise_std;
  uint64_t seed;
} EsSynthConfig;

typedef struct EsDims {
  size_t trials;
  size_t channels;
  size_t samples;
  size_t classes;
  size_t users;
  size_t sessions;
} EsDims;

typedef struct EsPerturbationInfo {
  /**
   * 0 sample-wise, 1 user-wise.
   */
  uint32_t mode;
  size_t count;
  size_t channels;
  size_t samples;
  double epsilon;
  double max_abs;
} EsPerturbationInfo;

/**
 * `extractor`: 0 selects cfgA, 1 selects cfgB.
 */
typedef struct EsSampleParams {
  double alpha;
  double beta;
  double epsilon;
  double eta;
  size_t n_iter;
  size_t model_epochs;
  size_t rounds;
  size_t batch_size;
  double lr;
  uint64_t seed;
  uint32_t extractor;
} EsSampleParams;

/**
 * A negative `gamma` selects the default `1e-6 / beta`.
 */
typedef struct EsUserParams {
  double alpha;
  double beta;
  double gamma;
  double init_std;
  size_t m_model;
  size_t m_pert;
  size_t batch_size;
  double lr;
  uint64_t seed;
  uint32_t extractor;
} EsUserParams;

typedef struct EsEvalParams {
  uint32_t extractor;
  size_t epochs;
  size_t head_epochs;
  size_t batch_size;
  double lr;
  size_t repeats;
  uint64_t seed;
  bool curves;
  bool perturb_test;
} EsEvalParams;

typedef struct EsAggregate {
  double bca_mean;
  double bca_std;
  double uia_mean;
  double uia_std;
  size_t folds;
} EsAggregate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the library.
 */
const char *es_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *es_version(void);

struct EsSynthConfig es_synth_config_reference(void);

enum EsStatus es_synth_generate(const struct EsSynthConfig *cfg, struct EsDataset **out_dataset);

/**
 * Builds a dataset from `trials × channels × samples` row-major values and
 * per-trial labels.
 */
enum EsStatus es_dataset_new(const struct EsDims *dims,
                             const double *values,
                             const uint32_t *task_labels,
                             const uint32_t *user_labels,
                             const uint32_t *session_labels,
                             struct EsDataset **out_dataset);

enum EsStatus es_dataset_read(const char *path_utf8, struct EsDataset **out_dataset);

enum EsStatus es_dataset_write(const struct EsDataset *dataset, const char *path_utf8);

enum EsStatus es_dataset_dims(const struct EsDataset *dataset, struct EsDims *out_dims);

/**
 * Copies all trial values; `len` must equal `trials × channels × samples`.
 */
enum EsStatus es_dataset_values(const struct EsDataset *dataset, double *buf, size_t len);

/**
 * Copies per-trial labels; `kind` is 0 task, 1 user, 2 session.
 */
enum EsStatus es_dataset_labels(const struct EsDataset *dataset,
                                uint32_t kind,
                                uint32_t *buf,
                                size_t len);

void es_dataset_free(struct EsDataset *dataset);

enum EsStatus es_perturbation_read(const char *path_utf8, struct EsPerturbation **out_pert);

enum EsStatus es_perturbation_write(const struct EsPerturbation *pert, const char *path_utf8);

enum EsStatus es_perturbation_info(const struct EsPerturbation *pert,
                                   struct EsPerturbationInfo *out_info);

/**
 * Copies all deltas; `len` must equal `count × channels × samples`.
 */
enum EsStatus es_perturbation_values(const struct EsPerturbation *pert, double *buf, size_t len);

void es_perturbation_free(struct EsPerturbation *pert);

enum EsStatus es_apply(const struct EsDataset *dataset,
                       const struct EsPerturbation *pert,
                       struct EsDataset **out_dataset);

struct EsSampleParams es_sample_params_default(void);

/**
 * Crafts bounded per-trial deltas. Either output may be null if unwanted.
 */
enum EsStatus es_shield_sample(const struct EsDataset *dataset,
                               const struct EsSampleParams *params,
                               struct EsPerturbation **out_pert,
                               struct EsDataset **out_dataset);

struct EsUserParams es_user_params_default(void);

/**
 * Crafts one template per user. Either output may be null if unwanted.
 */
enum EsStatus es_shield_user(const struct EsDataset *dataset,
                             const struct EsUserParams *params,
                             struct EsPerturbation **out_pert,
                             struct EsDataset **out_dataset);

enum EsStatus es_bca(const uint32_t *predictions,
                     const uint32_t *labels_,
                     size_t n,
                     size_t classes,
                     double *out_value);

enum EsStatus es_uia(const uint32_t *predictions,
                     const uint32_t *labels_,
                     size_t n,
                     double *out_value);

struct EsEvalParams es_eval_params_default(void);

/**
 * Leave-one-session-out evaluation. `perturbed` may be null for a clean run,
 * in which case `condition` is ignored.
 */
enum EsStatus es_eval_loso(const struct EsDataset *clean,
                           const struct EsDataset *perturbed,
                           uint32_t condition,
                           const struct EsEvalParams *params,
                           struct EsReport **out_report);

/**
 * Attaches a clean baseline so the report carries reductions.
 */
enum EsStatus es_report_pair(struct EsReport *report, const struct EsReport *baseline);

enum EsStatus es_report_aggregate(const struct EsReport *report, struct EsAggregate *out_aggregate);

/**
 * Report as JSON; release the string with [`es_string_free`].
 */
enum EsStatus es_report_json(const struct EsReport *report, char **out_json);

/**
 * Writes `report.json` and `curves.csv` into `dir`.
 */
enum EsStatus es_report_write(const struct EsReport *report, const char *dir_utf8);

void es_report_free(struct EsReport *report);

void es_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EEGSHIELD_H */
