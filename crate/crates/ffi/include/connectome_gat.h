#ifndef CONNECTOME_GAT_H
#define CONNECTOME_GAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgatStatus {
  CgatStatus_Ok = 0,
  CgatStatus_NullPointer = 1,
  CgatStatus_InvalidArgument = 2,
  CgatStatus_NotPositiveDefinite = 3,
  CgatStatus_DimensionMismatch = 4,
  CgatStatus_Io = 5,
  CgatStatus_Checkpoint = 6,
  CgatStatus_BufferTooSmall = 7,
  CgatStatus_Internal = 8,
} CgatStatus;

typedef enum CgatMetric {
  CgatMetric_Lerm = 0,
  CgatMetric_Airm = 1,
  CgatMetric_Skldm = 2,
} CgatMetric;

/**
 * Opaque trained model.
 */
typedef struct CgatModel CgatModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *cgat_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cgat_version(void);

/**
 * Distance between two SPD matrices of size `dim × dim`.
 *
 * # Safety
 * `a` and `b` must point to `dim * dim` readable doubles, `out` to one
 * writable double.
 */
enum CgatStatus cgat_spd_distance(const double *a,
                                  const double *b,
                                  size_t dim,
                                  enum CgatMetric metric,
                                  double *out);

/**
 * Length of the tangent vector for a `dim × dim` matrix: `dim (dim + 1) / 2`.
 */
size_t cgat_tangent_len(size_t dim);

/**
 * Log-Euclidean tangent vector (upper triangle, off-diagonals scaled by √2).
 *
 * # Safety
 * `a` must point to `dim * dim` doubles and `out` to `out_len` writable doubles.
 */
enum CgatStatus cgat_log_map(const double *a, size_t dim, double *out, size_t out_len);

/**
 * Projects a symmetric matrix onto the SPD cone with eigenvalues at least
 * `floor`.
 *
 * # Safety
 * `a` and `out` must each point to `dim * dim` doubles; they may alias.
 */
enum CgatStatus cgat_nearest_spd(const double *a, size_t dim, double floor, double *out);

/**
 * Keeps the `l` largest entries of a `rows × cols` mask and zeroes the rest.
 *
 * # Safety
 * `mask` and `out` must each point to `rows * cols` doubles.
 */
enum CgatStatus cgat_soft_threshold(const double *mask,
                                    size_t rows,
                                    size_t cols,
                                    size_t l,
                                    double *out);

/**
 * Loads a checkpoint written by the `cgat train` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CgatStatus cgat_model_load(const char *path, struct CgatModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`cgat_model_load`] and not be used afterwards.
 */
void cgat_model_free(struct CgatModel *model);

/**
 * Number of output classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cgat_model_num_classes(const struct CgatModel *model);

/**
 * Expected node feature width, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cgat_model_input_dim(const struct CgatModel *model);

/**
 * Classifies one connectome.
 *
 * `weights` is the `dim × dim` connectivity matrix. `features` holds
 * `dim × input_dim` node features, or is null to use the rows of `weights`.
 * Class probabilities go to `probs` (length at least the class count) and
 * the predicted class to `class_out`.
 *
 * # Safety
 * All non-null pointers must reference buffers of the stated sizes.
 */
enum CgatStatus cgat_model_predict(const struct CgatModel *model,
                                   const double *weights,
                                   const double *features,
                                   size_t dim,
                                   double *probs,
                                   size_t probs_len,
                                   size_t *class_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONNECTOME_GAT_H */
