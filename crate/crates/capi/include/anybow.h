/* anybow C API. Handles are opaque; every function returns an AnybowStatus. */

#ifndef ANYBOW_H
#define ANYBOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum AnybowStatus {
  ANYBOW_STATUS_OK = 0,
  ANYBOW_STATUS_INVALID_ARGUMENT = 1,
  ANYBOW_STATUS_IO = 2,
  ANYBOW_STATUS_FORMAT = 3,
  ANYBOW_STATUS_DIMENSION_MISMATCH = 4,
  ANYBOW_STATUS_OUT_OF_RANGE = 5,
  ANYBOW_STATUS_MISSING_GROUND_TRUTH = 6,
  ANYBOW_STATUS_NULL_POINTER = 7,
  ANYBOW_STATUS_INVALID_UTF8 = 8,
} AnybowStatus;

typedef enum AnybowRuleKind {
  ANYBOW_RULE_KIND_RULE1,
  ANYBOW_RULE_KIND_RULE2,
  ANYBOW_RULE_KIND_RULE3,
  ANYBOW_RULE_KIND_HOEFFDING,
  ANYBOW_RULE_KIND_NEVER,
} AnybowRuleKind;

typedef struct AnybowDataset AnybowDataset;

typedef struct AnybowIndex AnybowIndex;

typedef struct AnybowQueryResult AnybowQueryResult;

typedef struct AnybowVocabulary AnybowVocabulary;

/**
 * Synthetic dataset parameters, mirroring the `synth` CLI flags.
 */
typedef struct AnybowSynthConfig {
  uint64_t num_images;
  uint64_t features_per_image;
  uint64_t dimension;
  uint64_t num_clusters;
  double hard_fraction;
  uint64_t confuser_count;
  double sigma;
} AnybowSynthConfig;

/**
 * Stopping rule selector. Only the field matching `kind` is read.
 */
typedef struct AnybowRule {
  enum AnybowRuleKind kind;
  double threshold;
  uint64_t patience;
  double delta;
} AnybowRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * is valid until the next API call from the same thread.
 */
const char *anybow_last_error(void);

/**
 * Library version as a static string.
 */
const char *anybow_version(void);

/**
 * Generates a synthetic dataset.
 *
 * # Safety
 * `cfg` and `out` must be valid pointers; `*out` receives an owned handle
 * that must be released with [`anybow_dataset_free`].
 */
enum AnybowStatus anybow_dataset_synthesize(const struct AnybowSynthConfig *cfg,
                                            uint64_t seed,
                                            struct AnybowDataset **out);

/**
 * Loads a dataset container plus its ground-truth sidecar when present.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `*out` receives an owned handle.
 */
enum AnybowStatus anybow_dataset_load(const char *path, struct AnybowDataset **out);

/**
 * # Safety
 * `ds` must be a live handle and `path` a NUL-terminated string.
 */
enum AnybowStatus anybow_dataset_save(const struct AnybowDataset *ds, const char *path);

/**
 * # Safety
 * `ds` must come from this library and not be freed twice.
 */
void anybow_dataset_free(struct AnybowDataset *ds);

/**
 * Number of images; 0 for a NULL handle.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
uint32_t anybow_dataset_num_images(const struct AnybowDataset *ds);

/**
 * Descriptor dimension; 0 for a NULL handle.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
uint32_t anybow_dataset_dimension(const struct AnybowDataset *ds);

/**
 * Number of query-half images; 0 for a NULL handle.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
uint32_t anybow_dataset_num_queries(const struct AnybowDataset *ds);

/**
 * Trains a k-means vocabulary on the dataset's database half and computes
 * idf over it.
 *
 * # Safety
 * `ds` must be a live handle; `*out` receives an owned handle for
 * [`anybow_vocab_free`].
 */
enum AnybowStatus anybow_vocab_train(const struct AnybowDataset *ds,
                                     uint32_t k,
                                     uint64_t seed,
                                     struct AnybowVocabulary **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `*out` receives an owned handle.
 */
enum AnybowStatus anybow_vocab_load(const char *path, struct AnybowVocabulary **out);

/**
 * # Safety
 * `v` must be a live handle and `path` a NUL-terminated string.
 */
enum AnybowStatus anybow_vocab_save(const struct AnybowVocabulary *v, const char *path);

/**
 * # Safety
 * `v` must come from this library and not be freed twice.
 */
void anybow_vocab_free(struct AnybowVocabulary *v);

/**
 * Vocabulary size; 0 for a NULL handle.
 *
 * # Safety
 * `v` must be NULL or a live handle.
 */
uint32_t anybow_vocab_k(const struct AnybowVocabulary *v);

/**
 * Descriptor dimension; 0 for a NULL handle.
 *
 * # Safety
 * `v` must be NULL or a live handle.
 */
uint32_t anybow_vocab_dimension(const struct AnybowVocabulary *v);

/**
 * Maps one descriptor to its nearest word by exact scan.
 *
 * # Safety
 * `values` must point to `len` readable floats; `word` and `distance` must
 * be valid output pointers.
 */
enum AnybowStatus anybow_vocab_quantize(const struct AnybowVocabulary *v,
                                        const float *values,
                                        uintptr_t len,
                                        uint32_t *word,
                                        double *distance);

/**
 * Builds the inverted index over the dataset's database half.
 *
 * # Safety
 * `v` and `ds` must be live handles; `*out` receives an owned handle for
 * [`anybow_index_free`].
 */
enum AnybowStatus anybow_index_build(const struct AnybowVocabulary *v,
                                     const struct AnybowDataset *ds,
                                     struct AnybowIndex **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `*out` receives an owned handle.
 */
enum AnybowStatus anybow_index_load(const char *path, struct AnybowIndex **out);

/**
 * # Safety
 * `ix` must be a live handle and `path` a NUL-terminated string.
 */
enum AnybowStatus anybow_index_save(const struct AnybowIndex *ix, const char *path);

/**
 * # Safety
 * `ix` must come from this library and not be freed twice.
 */
void anybow_index_free(struct AnybowIndex *ix);

/**
 * Indexed database size; 0 for a NULL handle.
 *
 * # Safety
 * `ix` must be NULL or a live handle.
 */
uint32_t anybow_index_num_images(const struct AnybowIndex *ix);

/**
 * Runs one anytime query against the image with the given dataset id.
 *
 * # Safety
 * All handles must be live; `rule` must point to a filled [`AnybowRule`];
 * `*out` receives an owned handle for [`anybow_result_free`].
 */
enum AnybowStatus anybow_query_run(const struct AnybowIndex *ix,
                                   const struct AnybowVocabulary *v,
                                   const struct AnybowDataset *ds,
                                   uint32_t query_image_id,
                                   const struct AnybowRule *rule,
                                   uint32_t n,
                                   uint64_t seed,
                                   struct AnybowQueryResult **out);

/**
 * # Safety
 * `res` must come from this library and not be freed twice.
 */
void anybow_result_free(struct AnybowQueryResult *res);

/**
 * Number of ranked entries; 0 for a NULL handle.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
uintptr_t anybow_result_len(const struct AnybowQueryResult *res);

/**
 * Database image id at the given rank.
 *
 * # Safety
 * `res` must be a live handle; `out` a valid output pointer.
 */
enum AnybowStatus anybow_result_image_id(const struct AnybowQueryResult *res,
                                         uintptr_t rank,
                                         uint32_t *out);

/**
 * Accumulated score at the given rank.
 *
 * # Safety
 * `res` must be a live handle; `out` a valid output pointer.
 */
enum AnybowStatus anybow_result_score(const struct AnybowQueryResult *res,
                                      uintptr_t rank,
                                      double *out);

/**
 * Features quantized before stopping; 0 for a NULL handle.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
uint64_t anybow_result_features_processed(const struct AnybowQueryResult *res);

/**
 * Fraction of the query's features processed; 0 for a NULL handle.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
double anybow_result_fraction_processed(const struct AnybowQueryResult *res);

/**
 * True when the stopping rule fired before exhaustion.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
bool anybow_result_rule_fired(const struct AnybowQueryResult *res);

/**
 * Simulates the two-distribution stopping race; see the CLI `race` command.
 *
 * # Safety
 * `error_rate` and `mean_stop_time` must be valid output pointers.
 */
enum AnybowStatus anybow_race_simulate(double mu1,
                                       double mu2,
                                       double delta,
                                       uint64_t trials,
                                       uint64_t seed,
                                       double *error_rate,
                                       double *mean_stop_time);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANYBOW_H */
