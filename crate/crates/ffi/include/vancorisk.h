#ifndef VANCORISK_H
#define VANCORISK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of a call.
 */
typedef enum VancoriskStatus {
  VANCORISK_STATUS_OK = 0,
  VANCORISK_STATUS_NULL_POINTER = 1,
  VANCORISK_STATUS_INVALID_UTF8 = 2,
  VANCORISK_STATUS_IO = 3,
  /*
   The model document could not be parsed or has the wrong schema.
   */
  VANCORISK_STATUS_PARSE = 4,
  /*
   A row had the wrong number of features.
   */
  VANCORISK_STATUS_WIDTH_MISMATCH = 5,
  VANCORISK_STATUS_INVALID_ARGUMENT = 6,
  /*
   Any other library error.
   */
  VANCORISK_STATUS_MODEL = 7,
  /*
   A panic was caught at the boundary.
   */
  VANCORISK_STATUS_INTERNAL = 8,
} VancoriskStatus;

/*
 Opaque model handle.
 */
typedef struct VancoriskModel VancoriskModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Load a model from a JSON file written by the `train` step.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer to
 writable storage for a handle. On success `*out` owns a handle that must
 be released with [`vancorisk_model_free`]; on failure it is set to NULL.
 */
enum VancoriskStatus vancorisk_model_load(const char *path, struct VancoriskModel **out);

/*
 Load a model from its JSON text.

 # Safety
 As for [`vancorisk_model_load`], with `json` a NUL-terminated string.
 */
enum VancoriskStatus vancorisk_model_from_json(const char *json, struct VancoriskModel **out);

/*
 Release a handle. NULL is ignored.

 # Safety
 `model` must be NULL or a handle from this library that has not been freed.
 */
void vancorisk_model_free(struct VancoriskModel *model);

/*
 Number of features a row must have; 0 for a NULL handle.

 # Safety
 `model` must be NULL or a live handle.
 */
size_t vancorisk_model_n_features(const struct VancoriskModel *model);

/*
 Name of feature `index` in row order, or NULL when out of range. The
 string lives as long as the handle.

 # Safety
 `model` must be NULL or a live handle.
 */
const char *vancorisk_model_feature_name(const struct VancoriskModel *model, size_t index);

/*
 Predicted risk in [0, 1] for one raw feature row of `n_features` values.

 # Safety
 `model` must be a live handle, `row` must point to `n_features` readable
 doubles and `out_risk` to one writable double.
 */
enum VancoriskStatus vancorisk_model_predict(const struct VancoriskModel *model,
                                             const double *row,
                                             size_t n_features,
                                             double *out_risk);

/*
 Predicted risks for `n_rows` row-major raw feature rows.

 # Safety
 `model` must be a live handle, `rows` must point to `n_rows * n_features`
 readable doubles and `out_risks` to `n_rows` writable doubles.
 */
enum VancoriskStatus vancorisk_model_predict_batch(const struct VancoriskModel *model,
                                                   const double *rows,
                                                   size_t n_rows,
                                                   size_t n_features,
                                                   double *out_risks);

/*
 Message of the last failed call on this thread, or NULL after a
 successful call. Valid until the next call on the same thread.
 */
const char *vancorisk_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *vancorisk_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VANCORISK_H */
