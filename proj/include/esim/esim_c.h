#ifndef ESIM_C_H
#define ESIM_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(ESIM_BUILDING_LIBRARY)
#define ESIM_API __declspec(dllexport)
#else
#define ESIM_API __declspec(dllimport)
#endif
#else
#define ESIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum esim_status {
  ESIM_OK = 0,
  ESIM_ERR_INVALID_ARGUMENT = 1,
  ESIM_ERR_GENERATION = 2,
  ESIM_ERR_EMPTY_SCAN = 3,
  ESIM_ERR_DEGENERATE_GEOMETRY = 4,
  ESIM_ERR_CONDITIONING = 5,
  ESIM_ERR_GRID_TOO_LARGE = 6,
  ESIM_ERR_CONFIGURATION = 7,
  ESIM_ERR_DEGENERATE_INPUT = 8,
  ESIM_ERR_IO = 9,
  ESIM_ERR_INTERNAL = 10
} esim_status;

typedef struct esim_object esim_object;
typedef struct esim_hole esim_hole;
typedef struct esim_experiment esim_experiment;
typedef struct esim_report esim_report;

/* Message of the last failed call on this thread ("" if none). */
ESIM_API const char* esim_last_error(void);
ESIM_API const char* esim_status_string(esim_status status);
ESIM_API const char* esim_version(void);
/* Frees strings returned through char** out-parameters. */
ESIM_API void esim_string_free(char* s);

ESIM_API esim_status esim_object_generate(uint64_t seed, int n_primitives, esim_object** out);
ESIM_API esim_status esim_object_from_json(const char* json, esim_object** out);
ESIM_API esim_status esim_object_to_json(const esim_object* object, char** out_json);
ESIM_API esim_status esim_object_radius(const esim_object* object, double theta, double phi, double* out);
/* The same body held in the hand after rotation by Euler angles (alpha, beta, gamma). */
ESIM_API esim_status esim_object_rotated(const esim_object* object, double alpha, double beta, double gamma,
                                         esim_object** out);
ESIM_API void esim_object_free(esim_object* object);

ESIM_API esim_status esim_hole_make(const esim_object* object, double alpha, double beta, double gamma, int samples,
                                    double clearance, esim_hole** out);
ESIM_API esim_status esim_hole_from_json(const char* json, esim_hole** out);
ESIM_API esim_status esim_hole_to_json(const esim_hole* hole, char** out_json);
ESIM_API esim_status esim_true_min_margin(const esim_object* object, const esim_hole* hole, double alpha, double beta,
                                          double gamma, double* out);
ESIM_API void esim_hole_free(esim_hole* hole);

/* Runs one exploration episode. strategy_json and noise_json may be NULL for
   defaults. The result is a JSON document with success, steps, trueMargin,
   finalOrientation, finalScore and the per-step log. */
ESIM_API esim_status esim_run_episode(const esim_object* hand, const esim_hole* hole, const char* strategy_json,
                                      const char* noise_json, uint64_t seed, char** out_json);

/* Suite of n objects with their holes and feasible orientations as JSON. */
ESIM_API esim_status esim_generate_suite(uint64_t seed, int n, int hole_samples, double clearance, char** out_json);

ESIM_API esim_status esim_experiment_from_json(const char* json, esim_experiment** out);
ESIM_API esim_status esim_experiment_load(const char* path, esim_experiment** out);
ESIM_API esim_status esim_experiment_set_output(esim_experiment* experiment, const char* path);
/* Negative values leave the corresponding sigma unchanged. */
ESIM_API esim_status esim_experiment_set_noise(esim_experiment* experiment, double point_sigma, double depth_sigma,
                                               double odom_rot_sigma, double odom_trans_sigma);
ESIM_API esim_status esim_experiment_set_threads(esim_experiment* experiment, int threads);
ESIM_API esim_status esim_experiment_to_json(const esim_experiment* experiment, char** out_json);
ESIM_API void esim_experiment_free(esim_experiment* experiment);

typedef void (*esim_progress_fn)(int object, int grasp, const char* strategy, int steps, int success, void* user);

ESIM_API esim_status esim_experiment_run(const esim_experiment* experiment, esim_progress_fn progress, void* user,
                                         esim_report** out);
/* target: "depth" or "model". Writes sweep.csv to the experiment output path
   when one is set and returns the same table. */
ESIM_API esim_status esim_experiment_sweep(const esim_experiment* experiment, const double* sigmas, size_t n,
                                           const char* target, esim_progress_fn progress, void* user,
                                           char** out_csv);

ESIM_API esim_status esim_report_summary_json(const esim_report* report, char** out_json);
ESIM_API esim_status esim_report_episodes_csv(const esim_report* report, char** out_csv);
/* strategies_csv: comma-separated labels, NULL for all. An empty string
   selects nothing and writes no files. */
ESIM_API esim_status esim_report_emit_plots(const esim_report* report, const char* dir, const char* strategies_csv,
                                            int* files_written);
ESIM_API void esim_report_free(esim_report* report);

/* Recomputes the summary of a report directory from episodes.csv. *consistent
   is 1 when it matches summary.json (or summary.json is absent), else 0. */
ESIM_API esim_status esim_stats(const char* report_dir, char** out_json, int* consistent);

ESIM_API esim_status esim_paired_t_test(const double* a, const double* b, size_t n, double* t, double* p);

#ifdef __cplusplus
}
#endif

#endif
