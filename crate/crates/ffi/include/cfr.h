#ifndef CFR_H
#define CFR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum CfrStatus {
  CFR_STATUS_OK = 0,
  CFR_STATUS_NULL_POINTER = 1,
  CFR_STATUS_INVALID_INPUT = 2,
  CFR_STATUS_PARSE = 3,
  CFR_STATUS_IO = 4,
  CFR_STATUS_POLE = 5,
  CFR_STATUS_DEGENERATE = 6,
  CFR_STATUS_PANIC = 7,
};

// A table of feature rows and targets.
struct CfrDataset;

// A fitted or loaded continued fraction model.
struct CfrModel;

// Search settings. Obtain defaults from [`cfr_config_default`].
struct CfrConfig {
  double delta;
  size_t depth;
  size_t generations;
  double mutation_rate;
  size_t nm_instances;
  size_t nm_iterations;
  size_t nm_stagnation;
  double subsample;
  size_t reset_stagnation;
  uint64_t seed;
};

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failed call on this thread, or NULL after a
// successful call. Valid until the next call into this library on the same thread.
const char *cfr_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void cfr_string_free(char *s);

struct CfrConfig cfr_config_default(void);

// Parses a model document.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum CfrStatus cfr_model_from_text(const char *text, struct CfrModel **out);

// Serialises a model document. Free the result with [`cfr_string_free`].
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum CfrStatus cfr_model_to_text(const struct CfrModel *model, char **out);

// # Safety
// `model` must be NULL or a handle not yet freed.
void cfr_model_free(struct CfrModel *model);

// Number of input variables, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t cfr_model_n_vars(const struct CfrModel *model);

// # Safety
// `model` must be NULL or a live handle.
size_t cfr_model_depth(const struct CfrModel *model);

// Evaluates the model at `x` (length `n`). Returns `CFR_STATUS_POLE` when
// the evaluation hits a pole or overflows.
//
// # Safety
// `x` must point to `n` doubles; `out` must be writable.
enum CfrStatus cfr_model_evaluate(const struct CfrModel *model,
                                  const double *x,
                                  size_t n,
                                  double *out);

// Formula text, plain or LaTeX, using default variable names.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum CfrStatus cfr_model_render(const struct CfrModel *model, bool latex, char **out);

// Loads a delimiter-separated file (optionally gzip-compressed) with a header row.
//
// # Safety
// `path` and `target_column` must be NUL-terminated strings; `out` must be writable.
enum CfrStatus cfr_dataset_load(const char *path,
                                const char *target_column,
                                struct CfrDataset **out);

// Copies `n_rows x n_cols` row-major features and `n_rows` targets.
// Columns are named `x0`, `x1`, ...
//
// # Safety
// `features` must hold `n_rows * n_cols` doubles, `targets` `n_rows`.
enum CfrStatus cfr_dataset_from_arrays(const double *features,
                                       size_t n_rows,
                                       size_t n_cols,
                                       const double *targets,
                                       struct CfrDataset **out);

// # Safety
// `ds` must be NULL or a handle not yet freed.
void cfr_dataset_free(struct CfrDataset *ds);

// # Safety
// `ds` must be NULL or a live handle.
size_t cfr_dataset_n_rows(const struct CfrDataset *ds);

// # Safety
// `ds` must be NULL or a live handle.
size_t cfr_dataset_n_cols(const struct CfrDataset *ds);

// Runs the memetic search on `train`. `test` may be NULL, in which case
// `train` is used for the final metrics too. `config` may be NULL for defaults.
//
// # Safety
// Handles must be live; `out` must be writable.
enum CfrStatus cfr_fit(const struct CfrDataset *train,
                       const struct CfrDataset *test,
                       const struct CfrConfig *config,
                       struct CfrModel **out);

// Mean squared error of the model on `ds`; infinite if any prediction is not finite.
//
// # Safety
// Handles must be live; `out` must be writable.
enum CfrStatus cfr_model_mse(const struct CfrModel *model,
                             const struct CfrDataset *ds,
                             double *out);

// MSE divided by the sample variance of the targets.
//
// # Safety
// Handles must be live; `out` must be writable.
enum CfrStatus cfr_model_nmse(const struct CfrModel *model,
                              const struct CfrDataset *ds,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFR_H */
