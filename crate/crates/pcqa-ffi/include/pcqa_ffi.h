#ifndef PCQA_FFI_H
#define PCQA_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible entry point.
 */
typedef enum PcqaStatus {
  Ok = 0,
  /**
   * A required pointer argument was null.
   */
  NullArgument = 1,
  /**
   * File could not be read or written.
   */
  Io = 2,
  /**
   * Input file or payload failed to parse.
   */
  Parse = 3,
  /**
   * Argument outside its documented domain.
   */
  InvalidArgument = 4,
  /**
   * Numerical routine failed.
   */
  Compute = 5,
} PcqaStatus;

/**
 * Opaque colored point cloud handle.
 */
typedef struct PcqaPointCloud PcqaPointCloud;

/**
 * Opaque trained regressor handle.
 */
typedef struct PcqaSvrModel PcqaSvrModel;

/**
 * Agreement metrics between predictions and subjective scores.
 */
typedef struct PcqaMetricReport {
  double srcc;
  double plcc;
  double krcc;
  double rmse;
  uintptr_t n;
} PcqaMetricReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buffer` (NUL
 * terminated, truncated to `length` bytes). Returns the full message
 * length in bytes, excluding the terminator.
 *
 * # Safety
 * `buffer` must point to `length` writable bytes, or be null (then only
 * the required length is returned).
 */
uintptr_t pcqa_last_error_message(char *buffer, uintptr_t length);

/**
 * Loads a colored point cloud from a PLY file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer. On
 * success `*out` owns the cloud and must be released with
 * [`pcqa_point_cloud_free`].
 */
enum PcqaStatus pcqa_point_cloud_load(const char *path, struct PcqaPointCloud **out);

/**
 * Releases a cloud handle; a null pointer is a no-op.
 *
 * # Safety
 * `cloud` must come from [`pcqa_point_cloud_load`] and not be freed twice.
 */
void pcqa_point_cloud_free(struct PcqaPointCloud *cloud);

/**
 * Writes the point count of the cloud to `out`.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum PcqaStatus pcqa_point_cloud_size(const struct PcqaPointCloud *cloud, uintptr_t *out);

/**
 * Computes the structural feature vector over `scale_count` neighborhood
 * sizes: `out` receives `6 * scale_count` values ordered
 * (avg, std, entropy) x (linearity, planarity) x ascending scale.
 *
 * # Safety
 * `scales` must hold `scale_count` entries and `out` must hold
 * `out_length >= 6 * scale_count` doubles.
 */
enum PcqaStatus pcqa_structural_features(const struct PcqaPointCloud *cloud,
                                         const uint32_t *scales,
                                         uintptr_t scale_count,
                                         double *out,
                                         uintptr_t out_length);

/**
 * Renders the six cube-face projections as `<name>_face<k>.png` under
 * `out_dir`.
 *
 * # Safety
 * `cloud` must be a live handle and `out_dir` a NUL-terminated path.
 */
enum PcqaStatus pcqa_render_projections(const struct PcqaPointCloud *cloud,
                                        uint32_t resolution,
                                        uint32_t splat_radius,
                                        double margin,
                                        const char *out_dir);

/**
 * Maps a MOS to its five-level rating: 1 = bad through 5 = excellent.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PcqaStatus pcqa_mos_to_level(double mos, double mos_min, double mos_max, int *out);

/**
 * Softmax over the five rating log-probabilities.
 *
 * # Safety
 * Both pointers must reference five doubles.
 */
enum PcqaStatus pcqa_softmax_probabilities(const double *logprobs, double *probs_out);

/**
 * Deterministic mock rating of a named cloud; writes the five
 * probabilities in level order.
 *
 * # Safety
 * `cloud_name` must be NUL-terminated; `probs_out` must hold five doubles.
 */
enum PcqaStatus pcqa_mock_score(const char *cloud_name,
                                double mos,
                                double mos_min,
                                double mos_max,
                                uint64_t seed,
                                double sigma,
                                double *probs_out);

/**
 * Loads a trained model file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` receives an owned handle to free
 * with [`pcqa_svr_model_free`].
 */
enum PcqaStatus pcqa_svr_model_load(const char *path, struct PcqaSvrModel **out);

/**
 * Releases a model handle; a null pointer is a no-op.
 *
 * # Safety
 * `model` must come from [`pcqa_svr_model_load`] and not be freed twice.
 */
void pcqa_svr_model_free(struct PcqaSvrModel *model);

/**
 * Predicts the quality score of one fused feature row (five rating
 * probabilities followed by the structural features).
 *
 * # Safety
 * `features` must hold `feature_count` doubles matching the model's
 * training dimension; `out` must be valid.
 */
enum PcqaStatus pcqa_svr_predict(const struct PcqaSvrModel *model,
                                 const double *features,
                                 uintptr_t feature_count,
                                 double *out);

/**
 * SRCC, PLCC, KRCC and RMSE between `length` predictions and MOS values.
 *
 * # Safety
 * `pred` and `mos` must hold `length` doubles; `out` must be valid.
 */
enum PcqaStatus pcqa_metrics_report(const double *pred,
                                    const double *mos,
                                    uintptr_t length,
                                    bool apply_logistic,
                                    struct PcqaMetricReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCQA_FFI_H */
