#ifndef GNNAV_H
#define GNNAV_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GnnavStatus {
  GNNAV_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an out-of-range argument.
   */
  GNNAV_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Malformed JSON or graph file.
   */
  GNNAV_STATUS_PARSE = 2,
  GNNAV_STATUS_IO = 3,
  /**
   * The candidate does not fit in device memory.
   */
  GNNAV_STATUS_INFEASIBLE = 4,
  /**
   * No candidate satisfies the requirements.
   */
  GNNAV_STATUS_NO_FEASIBLE = 5,
  /**
   * The estimator could not be fitted or is unusable.
   */
  GNNAV_STATUS_ESTIMATOR = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  GNNAV_STATUS_INTERNAL = 7,
} GnnavStatus;

/**
 * Opaque fitted estimator handle.
 */
typedef struct GnnavEstimator GnnavEstimator;

/**
 * Opaque graph handle.
 */
typedef struct GnnavGraph GnnavGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, statically allocated.
 */
const char *gnnav_version(void);

/**
 * Message of the last failed call on this thread, or null. The caller
 * frees the copy with [`gnnav_string_free`].
 */
char *gnnav_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void gnnav_string_free(char *s);

/**
 * Generate a synthetic power-law graph.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum GnnavStatus gnnav_graph_generate(size_t num_vertices,
                                      size_t m,
                                      size_t n_attr,
                                      size_t num_classes,
                                      uint64_t seed,
                                      struct GnnavGraph **out);

/**
 * Load a graph written by [`gnnav_graph_save`] or the command-line tool.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GnnavStatus gnnav_graph_load(const char *path, struct GnnavGraph **out);

/**
 * # Safety
 * `g` must be a live handle and `path` a NUL-terminated string.
 */
enum GnnavStatus gnnav_graph_save(const struct GnnavGraph *g, const char *path);

/**
 * Vertex count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t gnnav_graph_num_vertices(const struct GnnavGraph *g);

/**
 * Undirected edge count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t gnnav_graph_num_edges(const struct GnnavGraph *g);

/**
 * Degree summary of the graph as JSON.
 *
 * # Safety
 * `g` must be a live handle and `out` a valid pointer.
 */
enum GnnavStatus gnnav_graph_profile_json(const struct GnnavGraph *g, char **out);

/**
 * # Safety
 * `g` must be null or a handle not freed before.
 */
void gnnav_graph_free(struct GnnavGraph *g);

/**
 * Simulate a candidate (JSON) on `g` and return its profiling record as
 * JSON. A null `hardware_json` selects the default hardware.
 *
 * # Safety
 * Pointers must be live handles, NUL-terminated strings or valid out
 * pointers as documented.
 */
enum GnnavStatus gnnav_simulate_json(const struct GnnavGraph *g,
                                     const char *candidate_json,
                                     const char *hardware_json,
                                     size_t epochs,
                                     uint64_t seed,
                                     char **out);

/**
 * Parse an estimator document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GnnavStatus gnnav_estimator_from_json(const char *json, struct GnnavEstimator **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GnnavStatus gnnav_estimator_load(const char *path, struct GnnavEstimator **out);

/**
 * Estimated performance of a candidate, as JSON with the intermediate
 * quantities.
 *
 * # Safety
 * Pointers must be live handles, NUL-terminated strings or valid out
 * pointers as documented.
 */
enum GnnavStatus gnnav_estimator_predict_json(const struct GnnavEstimator *est,
                                              const char *candidate_json,
                                              const char *hardware_json,
                                              char **out);

/**
 * Explore a design space and return the guideline as JSON. Null
 * `space_json`, `hardware_json` or `requirements_json` select defaults.
 *
 * # Safety
 * Pointers must be live handles, NUL-terminated strings or valid out
 * pointers as documented.
 */
enum GnnavStatus gnnav_explore_json(const struct GnnavEstimator *est,
                                    const char *space_json,
                                    const char *hardware_json,
                                    const char *requirements_json,
                                    char **out);

/**
 * # Safety
 * `e` must be null or a handle not freed before.
 */
void gnnav_estimator_free(struct GnnavEstimator *e);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GNNAV_H */
