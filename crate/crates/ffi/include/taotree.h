#ifndef TAOTREE_H
#define TAOTREE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum {
  TAO_STATUS_OK = 0,
  TAO_STATUS_NULL_POINTER = 1,
  TAO_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Unreadable or malformed input data or model file.
   */
  TAO_STATUS_DATA = 3,
  TAO_STATUS_TRAINING = 4,
  /**
   * A panic inside the library.
   */
  TAO_STATUS_INTERNAL = 5,
} TaoStatus;

typedef enum {
  TAO_TASK_CLASSIFICATION = 0,
  TAO_TASK_REGRESSION = 1,
} TaoTask;

typedef enum {
  TAO_PRUNE_RULE_MIN = 0,
  TAO_PRUNE_RULE_ONE_SE = 1,
} TaoPruneRule;

typedef enum {
  TAO_ALGORITHM_CART = 0,
  TAO_ALGORITHM_TAO_AXIS = 1,
  TAO_ALGORITHM_TAO_OBLIQUE = 2,
} TaoAlgorithm;

/**
 * Opaque dataset handle.
 */
typedef struct TaoDataset TaoDataset;

/**
 * Opaque model handle.
 */
typedef struct TaoModel TaoModel;

/**
 * Training options. Start from [`tao_train_options_default`].
 */
typedef struct {
  /**
   * Initial depth for `TaoOblique`; 0 grid-searches it.
   */
  uint32_t depth;
  /**
   * l1 weight for `TaoOblique`; negative grid-searches it.
   */
  double lambda;
  uint32_t max_iters;
  double tol;
  /**
   * Folds for CART pruning and for the grid search.
   */
  uint32_t folds;
  TaoPruneRule rule;
  uint64_t seed;
} TaoTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *tao_last_error_message(void);

/**
 * Classification dataset from row-major features and 1-based class labels
 * in `1..=n_classes`.
 *
 * # Safety
 * `features` must point to `n_rows * n_features` doubles, `labels` to
 * `n_rows` values and `out` to writable storage for one pointer.
 */
TaoStatus tao_dataset_classification(const double *features,
                                     size_t n_rows,
                                     size_t n_features,
                                     const uint32_t *labels,
                                     uint32_t n_classes,
                                     TaoDataset **out);

/**
 * Single-output regression dataset from row-major features and targets.
 *
 * # Safety
 * `features` must point to `n_rows * n_features` doubles, `targets` to
 * `n_rows` doubles and `out` to writable storage for one pointer.
 */
TaoStatus tao_dataset_regression(const double *features,
                                 size_t n_rows,
                                 size_t n_features,
                                 const double *targets,
                                 TaoDataset **out);

/**
 * Loads a CSV file with a header row. `target` is a column name or a
 * 0-based index. Categorical columns are not encoded through this call.
 *
 * # Safety
 * `path` and `target` must be nul-terminated strings and `out` writable
 * storage for one pointer.
 */
TaoStatus tao_dataset_load_csv(const char *path,
                               const char *target,
                               TaoTask task,
                               TaoDataset **out);

/**
 * # Safety
 * `data` must be null or a handle from a `tao_dataset_*` constructor that
 * has not been freed.
 */
void tao_dataset_free(TaoDataset *data);

/**
 * Number of rows; 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live dataset handle.
 */
size_t tao_dataset_n_rows(const TaoDataset *data);

/**
 * Number of features; 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live dataset handle.
 */
size_t tao_dataset_n_features(const TaoDataset *data);

TaoTrainOptions tao_train_options_default(void);

/**
 * Fits a model. `options` may be null for the defaults.
 *
 * # Safety
 * `data` must be a live dataset handle, `options` null or a valid pointer
 * and `out` writable storage for one pointer.
 */
TaoStatus tao_train(const TaoDataset *data,
                    TaoAlgorithm algorithm,
                    const TaoTrainOptions *options,
                    TaoModel **out);

/**
 * # Safety
 * `model` must be null or a live model handle.
 */
void tao_model_free(TaoModel *model);

/**
 * Values written per row by [`tao_model_predict`]: 1 for classification,
 * the output dimension for regression. 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live model handle.
 */
size_t tao_model_output_dim(const TaoModel *model);

/**
 * Number of input features the model expects; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live model handle.
 */
size_t tao_model_n_features(const TaoModel *model);

/**
 * Maximum depth; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live model handle.
 */
size_t tao_model_depth(const TaoModel *model);

/**
 * Number of leaves; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live model handle.
 */
size_t tao_model_leaves(const TaoModel *model);

/**
 * Predicts `n_rows` row-major rows. Classification writes the 1-based
 * class index of each row; regression writes its output vector. `out_len`
 * must equal `n_rows * tao_model_output_dim(model)`.
 *
 * # Safety
 * `features` must point to `n_rows * n_features` doubles and `out` to
 * `out_len` writable doubles.
 */
TaoStatus tao_model_predict(const TaoModel *model,
                            const double *features,
                            size_t n_rows,
                            size_t n_features,
                            double *out,
                            size_t out_len);

/**
 * Accuracy in percent (classification) or RMSE (regression) on `data`.
 *
 * # Safety
 * `model` and `data` must be live handles and `metric` a writable double.
 */
TaoStatus tao_model_evaluate(const TaoModel *model, const TaoDataset *data, double *metric);

/**
 * Writes the model as a version-1 JSON model file.
 *
 * # Safety
 * `model` must be a live handle and `path` a nul-terminated string.
 */
TaoStatus tao_model_save(const TaoModel *model, const char *path);

/**
 * Reads a JSON model file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable storage for
 * one pointer.
 */
TaoStatus tao_model_load(const char *path, TaoModel **out);

/**
 * The model as JSON text. Release the string with [`tao_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` writable storage for one
 * pointer.
 */
TaoStatus tao_model_to_json(const TaoModel *model, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library that has not been
 * freed.
 */
void tao_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAOTREE_H */
