#ifndef FRUITFIELD_H
#define FRUITFIELD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum FfStatus {
  FF_STATUS_OK = 0,
  // A pointer was null, a string was not UTF-8, or a value was out of
  // range.
  FF_STATUS_INVALID_ARGUMENT = 1,
  // Same meaning as the command-line exit code 2.
  FF_STATUS_INVALID_CONFIG = 2,
  // Same meaning as the command-line exit code 3.
  FF_STATUS_MISSING_ARTIFACT = 3,
  FF_STATUS_IO = 4,
  // Malformed PLY, JSON or checkpoint input.
  FF_STATUS_PARSE = 5,
  // Non-finite values or diverged training.
  FF_STATUS_NUMERIC = 6,
  FF_STATUS_EMPTY_POINT_SET = 7,
  // The scene generator could not place the requested fruits.
  FF_STATUS_PACKING = 8,
  FF_STATUS_PANIC = 9,
} FfStatus;

// Pipeline configuration.
typedef struct FfConfig FfConfig;

// Result of counting a point cloud.
typedef struct FfCountReport FfCountReport;

// Fruit point cloud.
typedef struct FfPointCloud FfPointCloud;

// Detection metrics of predicted centers against ground truth.
typedef struct FfMetrics {
  size_t true_positives;
  size_t false_positives;
  size_t false_negatives;
  double precision;
  double recall;
  double f1;
} FfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *ff_last_error(void);

// Library version, a static string.
const char *ff_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ff_string_free(char *s);

// Default configuration.
//
// # Safety
// `out` must be valid for writes.
enum FfStatus ff_config_default(struct FfConfig **out);

// Configuration from a JSON document; absent fields take defaults. Value
// invariants are not checked here; see [`ff_config_validate`].
//
// # Safety
// `json` must be a nul-terminated string and `out` valid for writes.
enum FfStatus ff_config_from_json(const char *json, struct FfConfig **out);

// Applies one `dotted.path=value` override, with the value read as JSON
// when it parses and as a string otherwise. The configuration is left
// unchanged on failure.
//
// # Safety
// `config` must be a live handle and `assignment` a nul-terminated string.
enum FfStatus ff_config_set(struct FfConfig *config, const char *assignment);

// Checks every value invariant. On failure the last error lists one
// problem per line.
//
// # Safety
// `config` must be a live handle.
enum FfStatus ff_config_validate(const struct FfConfig *config);

// The configuration as JSON. Free the result with [`ff_string_free`].
//
// # Safety
// `config` must be a live handle and `out` valid for writes.
enum FfStatus ff_config_to_json(const struct FfConfig *config, char **out);

// # Safety
// `config` must be null or a live handle; it is dangling afterwards.
void ff_config_free(struct FfConfig *config);

// Runs one pipeline stage (`synth`, `train`, `export`, `count`, `eval`,
// `e2e` or `sweep`) in the configuration's output directory. On success
// `manifest_out`, when not null, receives the run manifest as JSON.
//
// # Safety
// `config` must be a live handle, `stage` a nul-terminated string and
// `manifest_out` null or valid for writes.
enum FfStatus ff_run_stage(const struct FfConfig *config, const char *stage, char **manifest_out);

// Point cloud from `n` packed `x, y, z` triples.
//
// # Safety
// `xyz` must point to `3 * n` doubles (it may be null when `n` is 0) and
// `out` must be valid for writes.
enum FfStatus ff_point_cloud_from_xyz(const double *xyz, size_t n, struct FfPointCloud **out);

// Reads an ASCII PLY point cloud.
//
// # Safety
// `path` must be a nul-terminated string and `out` valid for writes.
enum FfStatus ff_point_cloud_read_ply(const char *path, struct FfPointCloud **out);

// Writes the cloud as ASCII PLY.
//
// # Safety
// `cloud` must be a live handle and `path` a nul-terminated string.
enum FfStatus ff_point_cloud_write_ply(const struct FfPointCloud *cloud, const char *path);

// Number of points; 0 for null.
//
// # Safety
// `cloud` must be null or a live handle.
size_t ff_point_cloud_len(const struct FfPointCloud *cloud);

// # Safety
// `cloud` must be null or a live handle; it is dangling afterwards.
void ff_point_cloud_free(struct FfPointCloud *cloud);

// Counts fruits in `cloud` with the configuration's counting section.
//
// # Safety
// `cloud` and `config` must be live handles and `out` valid for writes.
enum FfStatus ff_count(const struct FfPointCloud *cloud,
                       const struct FfConfig *config,
                       struct FfCountReport **out);

// Number of counted fruits; 0 for null.
//
// # Safety
// `report` must be null or a live handle.
size_t ff_count_report_total(const struct FfCountReport *report);

// Copies up to `capacity` fruit centers as packed `x, y, z` triples into
// `xyz` and returns the total number of centers. Call with `capacity` 0
// to query the size.
//
// # Safety
// `report` must be null or a live handle; `xyz` must have room for
// `3 * capacity` doubles.
size_t ff_count_report_centers(const struct FfCountReport *report, double *xyz, size_t capacity);

// The full report as JSON. Free the result with [`ff_string_free`].
//
// # Safety
// `report` must be a live handle and `out` valid for writes.
enum FfStatus ff_count_report_to_json(const struct FfCountReport *report, char **out);

// # Safety
// `report` must be null or a live handle; it is dangling afterwards.
void ff_count_report_free(struct FfCountReport *report);

// Matches predicted centers to ground-truth centers within distance `tau`
// and reports precision, recall and F1. `optimal` nonzero selects the
// minimum-cost one-to-one matching instead of the greedy nearest-first
// rule.
//
// # Safety
// `pred` and `gt` must point to `3 * n_pred` and `3 * n_gt` doubles (null
// is allowed for zero counts); `out` must be valid for writes.
enum FfStatus ff_match_centers(const double *pred,
                               size_t n_pred,
                               const double *gt,
                               size_t n_gt,
                               double tau,
                               int32_t optimal,
                               struct FfMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRUITFIELD_H */
