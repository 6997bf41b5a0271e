#ifndef TSHAP_H
#define TSHAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum TshapStatus {
  TSHAP_OK = 0,
  // A required pointer was null.
  TSHAP_ERR_NULL = 1,
  // Bad argument or configuration.
  TSHAP_ERR_INVALID = 2,
  // Degenerate failure probability or zero variance.
  TSHAP_ERR_DEGENERATE = 3,
  // Singular matrices, collinearity, quadrature failure, domain errors.
  TSHAP_ERR_NUMERIC = 4,
  // Malformed data.
  TSHAP_ERR_DATA = 5,
  // Internal panic.
  TSHAP_ERR_PANIC = 6,
} TshapStatus;

// Which oracle cost to aggregate.
typedef enum TshapOracleCost {
  TSHAP_COST_CLOSED_SOBOL = 0,
  TSHAP_COST_RESIDUAL = 1,
  TSHAP_COST_L1 = 2,
} TshapOracleCost;

// Linear Gaussian model with a failure threshold.
typedef struct TshapLinearModel TshapLinearModel;

// Input sample with an output column.
typedef struct TshapSample TshapSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tshap_version(void);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t tshap_last_error_message(char *buf, size_t len);

// Creates a sample from `n` rows of `d` inputs (row-major) and `n` outputs.
//
// # Safety
// `inputs` must hold `n * d` values, `output` `n` values, and `out` must be
// a valid pointer.
enum TshapStatus tshap_sample_new(const double *inputs,
                                  size_t n,
                                  size_t d,
                                  const double *output,
                                  struct TshapSample **out);

// # Safety
// `sample` must be null or a handle from [`tshap_sample_new`] not yet freed.
void tshap_sample_free(struct TshapSample *sample);

// Number of rows and inputs of a sample.
//
// # Safety
// `sample` must be a live handle; `n` and `d` must be valid pointers.
enum TshapStatus tshap_sample_shape(const struct TshapSample *sample, size_t *n, size_t *d);

// Nearest-neighbour target Shapley effects for the event `output > threshold`.
//
// `effects` receives `d` values; `p_hat` (optional) the failure frequency.
// A non-zero `l1` selects the mean-absolute-deviation cost.
//
// # Safety
// `sample` must be a live handle and `effects` valid for `d` values.
enum TshapStatus tshap_knn_effects(const struct TshapSample *sample,
                                   double threshold,
                                   size_t n_s,
                                   int standardize,
                                   int l1,
                                   uint64_t seed,
                                   double *effects,
                                   size_t d,
                                   double *p_hat);

// Creates `Y = beta0 + beta . X` with `X ~ N(mu, sigma)` (`sigma` row-major
// `d x d`) and failure event `Y > threshold`.
//
// # Safety
// `beta` and `mu` must hold `d` values, `sigma` `d * d`, `out` valid.
enum TshapStatus tshap_linear_model_new(double beta0,
                                        const double *beta,
                                        const double *mu,
                                        const double *sigma,
                                        size_t d,
                                        double threshold,
                                        struct TshapLinearModel **out);

// # Safety
// `model` must be null or a handle from [`tshap_linear_model_new`] not yet freed.
void tshap_linear_model_free(struct TshapLinearModel *model);

// Exact failure probability of a linear model.
//
// # Safety
// `model` must be a live handle and `p` a valid pointer.
enum TshapStatus tshap_linear_model_failure_probability(const struct TshapLinearModel *model,
                                                        double *p);

// Reference target Shapley effects of a linear model.
//
// # Safety
// `model` must be a live handle and `effects` valid for `d` values.
enum TshapStatus tshap_oracle_effects(const struct TshapLinearModel *model,
                                      enum TshapOracleCost cost,
                                      double *effects,
                                      size_t d);

// Shapley effects of a cost table with `2^d` entries indexed by bitmask
// (bit `j` set when input `j` is in the subset).
//
// # Safety
// `costs` must hold `2^d` values and `effects` `d` values.
enum TshapStatus tshap_shapley_exact(const double *costs, size_t d, double *effects);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSHAP_H */
