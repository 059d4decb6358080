#ifndef MDLRS_MDLRS_H
#define MDLRS_MDLRS_H

/* C interface to the multimodal remote-sensing classifier.
 *
 * All handles are opaque and owned by the caller once returned; release them
 * with the matching *_free function. Every fallible call returns an
 * mdlrs_status; on failure mdlrs_last_error() describes the problem. The
 * message is stored per thread and stays valid until the next failing call
 * on that thread. Strings returned by accessors are owned by the handle. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MDLRS_API __declspec(dllexport)
#else
#define MDLRS_API __attribute__((visibility("default")))
#endif

typedef enum mdlrs_status {
  MDLRS_OK = 0,
  MDLRS_ERR_USAGE = 1,
  MDLRS_ERR_CONFIG = 2,
  MDLRS_ERR_IO = 3,
  MDLRS_ERR_FORMAT = 4,
  MDLRS_ERR_TRAINING = 5,
  MDLRS_ERR_STATE = 6,
  MDLRS_ERR_UNDEFINED = 7,
  MDLRS_ERR_DIMENSION = 8,
  MDLRS_ERR_ARGUMENT = 9,
  MDLRS_ERR_VALIDATION = 10,
  MDLRS_ERR_INTERNAL = 11
} mdlrs_status;

typedef enum mdlrs_protocol { MDLRS_MML = 0, MDLRS_CML1 = 1, MDLRS_CML2 = 2 } mdlrs_protocol;

typedef struct mdlrs_dataset mdlrs_dataset;
typedef struct mdlrs_config mdlrs_config;
typedef struct mdlrs_model mdlrs_model;
typedef struct mdlrs_history mdlrs_history;
typedef struct mdlrs_report mdlrs_report;

MDLRS_API const char* mdlrs_last_error(void);
MDLRS_API const char* mdlrs_status_name(mdlrs_status status);
/* Process exit code for a status: 0 ok, 1 usage/config, 2 I/O/format,
 * 3 training, 4 shape/validation. */
MDLRS_API int mdlrs_exit_code(mdlrs_status status);

/* ---- datasets ---- */

typedef struct mdlrs_dataset_info {
  size_t height;
  size_t width;
  size_t num_classes;
  size_t bands1;
  size_t bands2;
  size_t train_pixels;
  size_t test_pixels;
} mdlrs_dataset_info;

MDLRS_API mdlrs_status mdlrs_dataset_load(const char* dir, mdlrs_dataset** out);
MDLRS_API mdlrs_status mdlrs_dataset_save(const mdlrs_dataset* ds, const char* dir);
/* spec_json: synthetic generator spec (NULL or "{}" for defaults). When
 * override_seed is nonzero, seed replaces the spec's seed. */
MDLRS_API mdlrs_status mdlrs_dataset_synthesize(const char* spec_json, int override_seed,
                                                uint64_t seed, mdlrs_dataset** out);
MDLRS_API mdlrs_status mdlrs_dataset_get_info(const mdlrs_dataset* ds, mdlrs_dataset_info* out);
/* Per-class counts of training and test pixels; arrays hold num_classes
 * entries, class i at index i - 1. Either pointer may be NULL. */
MDLRS_API mdlrs_status mdlrs_dataset_class_counts(const mdlrs_dataset* ds, size_t* train_counts,
                                                  size_t* test_counts);
MDLRS_API void mdlrs_dataset_free(mdlrs_dataset* ds);

/* ---- run configuration ---- */

MDLRS_API mdlrs_status mdlrs_config_parse(const char* json, mdlrs_config** out);
MDLRS_API mdlrs_status mdlrs_config_load(const char* path, mdlrs_config** out);
MDLRS_API void mdlrs_config_free(mdlrs_config* cfg);
MDLRS_API size_t mdlrs_config_seed_count(const mdlrs_config* cfg);
MDLRS_API uint64_t mdlrs_config_seed(const mdlrs_config* cfg, size_t index);
MDLRS_API mdlrs_status mdlrs_config_set_seeds(mdlrs_config* cfg, const uint64_t* seeds, size_t n);
MDLRS_API const char* mdlrs_config_dataset(const mdlrs_config* cfg);
MDLRS_API const char* mdlrs_config_output(const mdlrs_config* cfg);
MDLRS_API mdlrs_status mdlrs_config_set_output(mdlrs_config* cfg, const char* dir);
MDLRS_API mdlrs_protocol mdlrs_config_protocol(const mdlrs_config* cfg);

/* ---- training ---- */

typedef struct mdlrs_epoch_record {
  int epoch;
  double lr;
  double train_loss;
  double val_loss;
  double val_oa;
} mdlrs_epoch_record;

/* Trains one model with the given seed. Both outputs are required. */
MDLRS_API mdlrs_status mdlrs_train(const mdlrs_dataset* ds, const mdlrs_config* cfg, uint64_t seed,
                                   mdlrs_model** model, mdlrs_history** history);

MDLRS_API size_t mdlrs_history_length(const mdlrs_history* h);
MDLRS_API mdlrs_status mdlrs_history_get(const mdlrs_history* h, size_t index,
                                         mdlrs_epoch_record* out);
MDLRS_API int mdlrs_history_best_epoch(const mdlrs_history* h);
/* Validation OA of the best epoch, in [0,1]. */
MDLRS_API double mdlrs_history_best_val_oa(const mdlrs_history* h);
MDLRS_API mdlrs_status mdlrs_history_write_csv(const mdlrs_history* h, const char* path);
MDLRS_API void mdlrs_history_free(mdlrs_history* h);

/* ---- models ---- */

MDLRS_API mdlrs_status mdlrs_model_save(const mdlrs_model* model, const char* dir);
MDLRS_API mdlrs_status mdlrs_model_load(const char* dir, mdlrs_model** out);
MDLRS_API size_t mdlrs_model_parameter_count(const mdlrs_model* model);
MDLRS_API const char* mdlrs_model_fusion(const mdlrs_model* model);
MDLRS_API const char* mdlrs_model_flavor(const mdlrs_model* model);
MDLRS_API void mdlrs_model_free(mdlrs_model* model);

/* Metrics over the dataset's test-mask pixels. */
MDLRS_API mdlrs_status mdlrs_evaluate(mdlrs_model* model, const mdlrs_dataset* ds,
                                      mdlrs_protocol protocol, mdlrs_report** out);

/* Class (1..C) of every pixel, row-major, into a buffer of height*width. */
MDLRS_API mdlrs_status mdlrs_predict(mdlrs_model* model, const mdlrs_dataset* ds,
                                     mdlrs_protocol protocol, int32_t* classes, size_t capacity);

/* Writes a raw little-endian int32 class raster and a binary PPM color map. */
MDLRS_API mdlrs_status mdlrs_write_class_map(const int32_t* classes, size_t height, size_t width,
                                             const char* raster_path, const char* image_path);

/* ---- reports ---- */

MDLRS_API double mdlrs_report_oa(const mdlrs_report* r);
MDLRS_API double mdlrs_report_aa(const mdlrs_report* r);
MDLRS_API double mdlrs_report_kappa(const mdlrs_report* r);
MDLRS_API size_t mdlrs_report_num_classes(const mdlrs_report* r);
/* Recall of class (1..C); returns 0 and sets *present to 0 for classes with
 * no test samples. */
MDLRS_API double mdlrs_report_class_accuracy(const mdlrs_report* r, size_t cls, int* present);
/* Count of test pixels with the given truth and prediction. */
MDLRS_API uint64_t mdlrs_report_confusion(const mdlrs_report* r, size_t truth, size_t predicted);
MDLRS_API const char* mdlrs_report_text(const mdlrs_report* r);
MDLRS_API const char* mdlrs_report_csv(const mdlrs_report* r);
MDLRS_API void mdlrs_report_free(mdlrs_report* r);

#ifdef __cplusplus
}
#endif

#endif
