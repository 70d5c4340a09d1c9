/* C interface to the multimodal neural planner library.
 *
 * Objects are opaque handles created by the load and generate calls and
 * released with the matching *_free. Every fallible call returns an
 * mnp_status; on failure mnp_last_error() describes the problem (per thread,
 * valid until the next call on that thread). Output parameters are written
 * only on MNP_OK.
 */
#ifndef MNP_MNP_H
#define MNP_MNP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(MNP_BUILDING_LIBRARY)
#define MNP_API __declspec(dllexport)
#else
#define MNP_API __declspec(dllimport)
#endif
#else
#define MNP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mnp_status {
  MNP_OK = 0,
  MNP_ERR_INVALID_ARGUMENT = 1,
  MNP_ERR_DIMENSION_MISMATCH = 2,
  MNP_ERR_CONFIG = 3,
  MNP_ERR_IO = 4,
  MNP_ERR_FORMAT = 5,
  MNP_ERR_VERSION = 6,
  MNP_ERR_CHECKSUM = 7,
  MNP_ERR_TRUNCATED = 8,
  MNP_ERR_NUMERICAL = 9,
  MNP_ERR_GENERATION = 10,
  MNP_ERR_STALE_TAPE = 11,
  MNP_ERR_INTERNAL = 99
} mnp_status;

typedef enum mnp_plan_status {
  MNP_PLAN_DIRECT_SUCCESS = 0,
  MNP_PLAN_REPLANNED_SUCCESS = 1,
  MNP_PLAN_FAILURE = 2
} mnp_plan_status;

typedef enum mnp_replan_mode { MNP_REPLAN_NONE = 0, MNP_REPLAN_RRT = 1, MNP_REPLAN_NEURAL = 2 } mnp_replan_mode;

typedef struct mnp_scene mnp_scene;
typedef struct mnp_model mnp_model;
typedef struct mnp_path mnp_path;

MNP_API const char* mnp_version(void);
MNP_API const char* mnp_last_error(void);
MNP_API const char* mnp_status_name(mnp_status status);

/* Strings returned through char** are heap-allocated; release with mnp_string_free. */
MNP_API void mnp_string_free(char* s);

/* ---- scenes ---- */

/* scene_class: "simple2d" or "complex3d"; cloud_points <= 0 keeps the class default. */
MNP_API mnp_status mnp_scene_generate(const char* scene_class, uint64_t seed, int cloud_points, mnp_scene** out);
MNP_API mnp_status mnp_scene_load(const char* path, mnp_scene** out);
MNP_API mnp_status mnp_scene_save(const mnp_scene* scene, const char* path);
MNP_API mnp_status mnp_scene_to_json(const mnp_scene* scene, char** out);
MNP_API int mnp_scene_dim(const mnp_scene* scene);
MNP_API size_t mnp_scene_obstacle_count(const mnp_scene* scene);
MNP_API size_t mnp_scene_cloud_size(const mnp_scene* scene);
MNP_API void mnp_scene_free(mnp_scene* scene);

/* ---- robots and collision ---- */

/* robot: "point2d", "point3d", "rigid2d" or "nlink2d(k)". */
MNP_API mnp_status mnp_robot_dof(const char* robot, const mnp_scene* scene, size_t* dof);
MNP_API mnp_status mnp_check_collision(const mnp_scene* scene, const char* robot, const double* q, size_t dof,
                                       int* in_collision);
MNP_API mnp_status mnp_steer_to(const mnp_scene* scene, const char* robot, const double* a, const double* b,
                                size_t dof, int* feasible);

/* ---- models ---- */

MNP_API mnp_status mnp_model_load(const char* path, mnp_model** out);
/* "mnp" or "mse_baseline"; the pointer lives as long as the model. */
MNP_API const char* mnp_model_role(const mnp_model* model);
MNP_API size_t mnp_model_dof(const mnp_model* model);
MNP_API void mnp_model_free(mnp_model* model);

/* ---- planning ---- */

typedef struct mnp_plan_options {
  int n_iter;
  int n_col;
  mnp_replan_mode replan;
  int fallback; /* nonzero: pure RRT when the bidirectional pass returns nothing */
  int replan_max_iterations;
  double replan_max_time;
} mnp_plan_options;

MNP_API void mnp_plan_options_default(mnp_plan_options* options);

/* init and goal hold dof values each. A failed search is not an error: the
 * call returns MNP_OK and mnp_path_status() reports MNP_PLAN_FAILURE.
 * trace_path may be NULL; otherwise one line per bidirectional iteration is written there. */
MNP_API mnp_status mnp_plan(const mnp_scene* scene, const mnp_model* model, const char* robot, const double* init,
                            const double* goal, size_t dof, const mnp_plan_options* options, uint64_t seed,
                            const char* trace_path, mnp_path** out);

/* method: "rrt", "rrt_star" or "irrt_star". */
MNP_API mnp_status mnp_plan_classical(const mnp_scene* scene, const char* robot, const char* method,
                                      const double* init, const double* goal, size_t dof, int max_iterations,
                                      double max_time, uint64_t seed, mnp_path** out);

MNP_API mnp_plan_status mnp_path_status(const mnp_path* path);
MNP_API size_t mnp_path_waypoint_count(const mnp_path* path);
MNP_API size_t mnp_path_dof(const mnp_path* path);
/* Row-major waypoint_count x dof array, owned by the path. NULL when empty. */
MNP_API const double* mnp_path_waypoints(const mnp_path* path);
MNP_API double mnp_path_length(const mnp_path* path);
MNP_API double mnp_path_time(const mnp_path* path);
MNP_API void mnp_path_free(mnp_path* path);

/* Text form: one waypoint per line, coordinates separated by spaces. */
MNP_API mnp_status mnp_path_load(const char* file, mnp_path** out);
MNP_API mnp_status mnp_path_save(const mnp_path* path, const char* file);

/* ---- pipeline ---- */

typedef struct mnp_run_options {
  const char* config_path; /* NULL: built-in defaults */
  const char* out_dir;     /* NULL: keep the configured directory */
  uint64_t seed;
  int has_seed; /* nonzero: override the configured seed */
  int paper_scale;
  int strict_paper;
  int verbose; /* nonzero: progress lines on stderr */
} mnp_run_options;

MNP_API void mnp_run_options_default(mnp_run_options* options);

/* Resolved configuration as JSON. */
MNP_API mnp_status mnp_run_config(const mnp_run_options* options, char** json_out);
MNP_API mnp_status mnp_run_gen_envs(const mnp_run_options* options);
MNP_API mnp_status mnp_run_gen_data(const mnp_run_options* options);
/* Expert data for the two-way corridor scene, written under <out_dir>/corridor. */
MNP_API mnp_status mnp_run_gen_corridor(const mnp_run_options* options, int paths);
/* baseline != 0 trains the regression baseline. dataset_path NULL: the run's dataset. */
MNP_API mnp_status mnp_run_train(const mnp_run_options* options, int baseline, const char* dataset_path);
/* Writes records and summaries under <out_dir>/bench; summary_text may be NULL. */
MNP_API mnp_status mnp_run_bench(const mnp_run_options* options, char** summary_text);

/* Next-configuration draws from both models at (c_t, c_goal); c_t/c_goal
 * NULL selects the corridor query pose. svg_path may be NULL. */
MNP_API mnp_status mnp_multimodal_eval(const mnp_model* mnp_model_handle, const mnp_model* mse_model_handle,
                                       const mnp_scene* scene, const double* c_t, const double* c_goal,
                                       size_t dof, int n_draws, uint64_t seed, const char* svg_path,
                                       double* mnp_collision_rate, double* mse_collision_rate);

/* SVG of a scene with optional paths (each row-major, dof columns). */
MNP_API mnp_status mnp_render_svg(const mnp_scene* scene, const char* robot, const mnp_path* const* paths,
                                  size_t path_count, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif /* MNP_MNP_H */
