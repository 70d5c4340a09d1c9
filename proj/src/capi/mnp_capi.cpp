#include "mnp/mnp.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "classical.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "neural_planner.hpp"
#include "pipeline.hpp"
#include "planner_nets.hpp"
#include "robots.hpp"

struct mnp_scene {
  mnp::Scene scene;
};

struct mnp_model {
  explicit mnp_model(mnp::Checkpoint c) : model(std::move(c)), role(mnp::to_string(model.role())) {}
  mnp::TrainedModel model;
  std::string role;
};

struct mnp_path {
  mnp_plan_status status = MNP_PLAN_FAILURE;
  std::size_t dof = 0;
  std::vector<double> data;
  double length = 0.0;
  double time = 0.0;
};

namespace {

thread_local std::string g_last_error;

mnp_status map_code(mnp::ErrorCode c) {
  const int v = static_cast<int>(c);
  return v >= MNP_ERR_INVALID_ARGUMENT && v <= MNP_ERR_STALE_TAPE ? static_cast<mnp_status>(v) : MNP_ERR_INTERNAL;
}

template <class F>
mnp_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return MNP_OK;
  } catch (const mnp::Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return MNP_ERR_INTERNAL;
}

void require(bool cond, const char* what) {
  if (!cond) mnp::fail(mnp::ErrorCode::invalid_argument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

mnp::RobotModel build_robot(const char* robot, const mnp::Scene& scene) {
  require(robot != nullptr, "robot must not be null");
  return mnp::RobotSpec::parse(robot).build(scene.workspace);
}

mnp::Configuration to_config(const mnp::RobotModel& model, const double* v, std::size_t dof) {
  require(v != nullptr, "configuration must not be null");
  if (dof != static_cast<std::size_t>(model.dof()))
    mnp::fail(mnp::ErrorCode::dimension_mismatch, "configuration has " + std::to_string(dof) + " values, robot has " +
                                                      std::to_string(model.dof()) + " degrees of freedom");
  mnp::Configuration c(static_cast<Eigen::Index>(dof));
  for (std::size_t i = 0; i < dof; ++i) c[static_cast<Eigen::Index>(i)] = v[i];
  return c;
}

mnp_path* make_path(const mnp::RobotModel& model, const std::optional<mnp::Path>& p, mnp_plan_status status,
                    double time) {
  auto* out = new mnp_path;
  out->dof = static_cast<std::size_t>(model.dof());
  out->time = time;
  if (p) {
    out->status = status;
    for (const auto& w : p->waypoints)
      for (Eigen::Index k = 0; k < w.size(); ++k) out->data.push_back(w[k]);
    out->length = mnp::path_length(model, *p);
  } else {
    out->status = MNP_PLAN_FAILURE;
  }
  return out;
}

mnp::Path to_path(const mnp_path& p) {
  mnp::Path out;
  if (p.dof == 0) return out;
  for (std::size_t i = 0; i < p.data.size() / p.dof; ++i) {
    mnp::Configuration c(static_cast<Eigen::Index>(p.dof));
    for (std::size_t k = 0; k < p.dof; ++k) c[static_cast<Eigen::Index>(k)] = p.data[i * p.dof + k];
    out.waypoints.push_back(std::move(c));
  }
  return out;
}

mnp::RunConfig resolve(const mnp_run_options* o) {
  mnp_run_options d;
  mnp_run_options_default(&d);
  if (!o) o = &d;
  mnp::RunConfig base = o->paper_scale ? mnp::RunConfig::paper_scale() : mnp::RunConfig::desk();
  mnp::RunConfig cfg = o->config_path ? mnp::load_run_config(o->config_path, base) : base;
  if (o->has_seed) cfg.seed = o->seed;
  if (o->out_dir) cfg.out_dir = o->out_dir;
  if (o->strict_paper) cfg.strict_paper = true;
  cfg.validate();
  return cfg;
}

void progress(const mnp_run_options* o, const std::string& line) {
  if (o && o->verbose) std::fprintf(stderr, "%s\n", line.c_str());
}

std::string corridor_dir(const mnp::RunConfig& cfg) { return (std::filesystem::path(cfg.out_dir) / "corridor").string(); }

std::string describe(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

extern "C" {

const char* mnp_version(void) { return "1.0.0"; }

const char* mnp_last_error(void) { return g_last_error.c_str(); }

const char* mnp_status_name(mnp_status status) {
  switch (status) {
    case MNP_OK: return "ok";
    case MNP_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MNP_ERR_DIMENSION_MISMATCH: return "dimension_mismatch";
    case MNP_ERR_CONFIG: return "config";
    case MNP_ERR_IO: return "io";
    case MNP_ERR_FORMAT: return "format";
    case MNP_ERR_VERSION: return "version";
    case MNP_ERR_CHECKSUM: return "checksum";
    case MNP_ERR_TRUNCATED: return "truncated";
    case MNP_ERR_NUMERICAL: return "numerical";
    case MNP_ERR_GENERATION: return "generation";
    case MNP_ERR_STALE_TAPE: return "stale_tape";
    case MNP_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void mnp_string_free(char* s) { std::free(s); }

// ---- scenes

mnp_status mnp_scene_generate(const char* scene_class, uint64_t seed, int cloud_points, mnp_scene** out) {
  return guarded([&] {
    require(scene_class && out, "scene_class and out must not be null");
    mnp::SceneClassConfig cfg = mnp::scene_class_defaults(scene_class);
    if (cloud_points > 0) cfg.cloud_points = cloud_points;
    *out = new mnp_scene{mnp::generate_scene(cfg, seed)};
  });
}

mnp_status mnp_scene_load(const char* path, mnp_scene** out) {
  return guarded([&] {
    require(path && out, "path and out must not be null");
    *out = new mnp_scene{mnp::load_scene(path)};
  });
}

mnp_status mnp_scene_save(const mnp_scene* scene, const char* path) {
  return guarded([&] {
    require(scene && path, "scene and path must not be null");
    mnp::save_scene(scene->scene, path);
  });
}

mnp_status mnp_scene_to_json(const mnp_scene* scene, char** out) {
  return guarded([&] {
    require(scene && out, "scene and out must not be null");
    *out = dup_string(mnp::scene_to_json(scene->scene));
  });
}

int mnp_scene_dim(const mnp_scene* scene) { return scene ? scene->scene.dim() : 0; }
size_t mnp_scene_obstacle_count(const mnp_scene* scene) { return scene ? scene->scene.obstacles.size() : 0; }
size_t mnp_scene_cloud_size(const mnp_scene* scene) { return scene ? scene->scene.cloud.size() : 0; }
void mnp_scene_free(mnp_scene* scene) { delete scene; }

// ---- robots and collision

mnp_status mnp_robot_dof(const char* robot, const mnp_scene* scene, size_t* dof) {
  return guarded([&] {
    require(scene && dof, "scene and dof must not be null");
    *dof = static_cast<size_t>(build_robot(robot, scene->scene).dof());
  });
}

mnp_status mnp_check_collision(const mnp_scene* scene, const char* robot, const double* q, size_t dof,
                               int* in_collision) {
  return guarded([&] {
    require(scene && in_collision, "scene and in_collision must not be null");
    const auto model = build_robot(robot, scene->scene);
    *in_collision = mnp::phi(model, to_config(model, q, dof), scene->scene) ? 1 : 0;
  });
}

mnp_status mnp_steer_to(const mnp_scene* scene, const char* robot, const double* a, const double* b, size_t dof,
                        int* feasible) {
  return guarded([&] {
    require(scene && feasible, "scene and feasible must not be null");
    const auto model = build_robot(robot, scene->scene);
    *feasible = mnp::steer_to(model, to_config(model, a, dof), to_config(model, b, dof), scene->scene) ? 1 : 0;
  });
}

// ---- models

mnp_status mnp_model_load(const char* path, mnp_model** out) {
  return guarded([&] {
    require(path && out, "path and out must not be null");
    *out = new mnp_model(mnp::load_checkpoint(path));
  });
}

const char* mnp_model_role(const mnp_model* model) { return model ? model->role.c_str() : ""; }
size_t mnp_model_dof(const mnp_model* model) { return model ? static_cast<size_t>(model->model.dof()) : 0; }
void mnp_model_free(mnp_model* model) { delete model; }

// ---- planning

void mnp_plan_options_default(mnp_plan_options* options) {
  if (!options) return;
  options->n_iter = 50;
  options->n_col = 10;
  options->replan = MNP_REPLAN_RRT;
  options->fallback = 1;
  options->replan_max_iterations = 20000;
  options->replan_max_time = 10.0;
}

mnp_status mnp_plan(const mnp_scene* scene, const mnp_model* model, const char* robot, const double* init,
                    const double* goal, size_t dof, const mnp_plan_options* options, uint64_t seed,
                    const char* trace_path, mnp_path** out) {
  return guarded([&] {
    require(scene && model && out, "scene, model and out must not be null");
    mnp_plan_options o;
    mnp_plan_options_default(&o);
    if (options) o = *options;
    const auto rm = build_robot(robot, scene->scene);
    if (rm.dof() != model->model.dof())
      mnp::fail(mnp::ErrorCode::dimension_mismatch, "model was trained for a different robot");
    mnp::NeuralPlanConfig pc;
    pc.bp.n_iter = o.n_iter;
    pc.bp.n_col = o.n_col;
    pc.bp.validate();
    switch (o.replan) {
      case MNP_REPLAN_NONE: pc.replan = mnp::ReplanMode::none; break;
      case MNP_REPLAN_RRT: pc.replan = mnp::ReplanMode::rrt; break;
      case MNP_REPLAN_NEURAL: pc.replan = mnp::ReplanMode::neural; break;
      default: mnp::fail(mnp::ErrorCode::invalid_argument, "unknown replan mode");
    }
    pc.fallback = o.fallback != 0;
    pc.replan_budget.max_iterations = o.replan_max_iterations;
    pc.replan_budget.max_time = o.replan_max_time;
    mnp::validate(pc.replan_budget);
    mnp::Rng rng(seed);
    mnp::Trace trace;
    const auto res = mnp::neural_plan(rm, scene->scene, to_config(rm, init, dof), to_config(rm, goal, dof),
                                      model->model, pc, rng, trace_path ? &trace : nullptr);
    if (trace_path) mnp::write_file(trace_path, mnp::trace_to_text(trace));
    const auto status = res.status == mnp::PlanStatus::direct_success ? MNP_PLAN_DIRECT_SUCCESS
                                                                      : MNP_PLAN_REPLANNED_SUCCESS;
    *out = make_path(rm, res.path, status, res.timings.total);
  });
}

mnp_status mnp_plan_classical(const mnp_scene* scene, const char* robot, const char* method, const double* init,
                              const double* goal, size_t dof, int max_iterations, double max_time, uint64_t seed,
                              mnp_path** out) {
  return guarded([&] {
    require(scene && method && out, "scene, method and out must not be null");
    const auto rm = build_robot(robot, scene->scene);
    const auto a = to_config(rm, init, dof);
    const auto b = to_config(rm, goal, dof);
    mnp::PlannerBudget budget;
    budget.max_iterations = max_iterations;
    budget.max_time = max_time;
    mnp::validate(budget);
    mnp::Rng rng(seed);
    const std::string m = method;
    mnp::PlannerResult res;
    if (m == "rrt")
      res = mnp::rrt(rm, scene->scene, a, b, budget, rng);
    else if (m == "rrt_star")
      res = mnp::rrt_star(rm, scene->scene, a, b, budget, rng);
    else if (m == "irrt_star")
      res = mnp::informed_rrt_star(rm, scene->scene, a, b, budget, rng);
    else
      mnp::fail(mnp::ErrorCode::invalid_argument, "unknown method '" + m + "'");
    *out = make_path(rm, res.path, MNP_PLAN_DIRECT_SUCCESS, res.elapsed);
  });
}

mnp_plan_status mnp_path_status(const mnp_path* path) { return path ? path->status : MNP_PLAN_FAILURE; }
size_t mnp_path_waypoint_count(const mnp_path* path) {
  return path && path->dof ? path->data.size() / path->dof : 0;
}
size_t mnp_path_dof(const mnp_path* path) { return path ? path->dof : 0; }
const double* mnp_path_waypoints(const mnp_path* path) {
  return path && !path->data.empty() ? path->data.data() : nullptr;
}
double mnp_path_length(const mnp_path* path) { return path ? path->length : 0.0; }
double mnp_path_time(const mnp_path* path) { return path ? path->time : 0.0; }
void mnp_path_free(mnp_path* path) { delete path; }

mnp_status mnp_path_load(const char* file, mnp_path** out) {
  return guarded([&] {
    require(file && out, "file and out must not be null");
    std::istringstream in(mnp::read_file(file));
    auto p = std::make_unique<mnp_path>();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::vector<double> row;
      std::string tok;
      while (ls >> tok) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0' || !std::isfinite(v))
          mnp::fail(mnp::ErrorCode::format, std::string(file) + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
        row.push_back(v);
      }
      if (row.empty()) continue;
      if (p->dof == 0) p->dof = row.size();
      if (row.size() != p->dof)
        mnp::fail(mnp::ErrorCode::format, std::string(file) + ":" + std::to_string(lineno) + ": inconsistent waypoint size");
      p->data.insert(p->data.end(), row.begin(), row.end());
    }
    if (p->data.empty()) mnp::fail(mnp::ErrorCode::format, std::string(file) + ": no waypoints");
    p->status = MNP_PLAN_DIRECT_SUCCESS;
    for (std::size_t i = 1; i < p->data.size() / p->dof; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < p->dof; ++k) {
        const double d = p->data[i * p->dof + k] - p->data[(i - 1) * p->dof + k];
        s += d * d;
      }
      p->length += std::sqrt(s);
    }
    *out = p.release();
  });
}

mnp_status mnp_path_save(const mnp_path* path, const char* file) {
  return guarded([&] {
    require(path && file, "path and file must not be null");
    std::string text;
    for (std::size_t i = 0; path->dof && i < path->data.size() / path->dof; ++i) {
      for (std::size_t k = 0; k < path->dof; ++k) {
        if (k) text += ' ';
        text += mnp::format_double(path->data[i * path->dof + k]);
      }
      text += '\n';
    }
    mnp::write_file(file, text);
  });
}

// ---- pipeline

void mnp_run_options_default(mnp_run_options* options) {
  if (!options) return;
  options->config_path = nullptr;
  options->out_dir = nullptr;
  options->seed = 0;
  options->has_seed = 0;
  options->paper_scale = 0;
  options->strict_paper = 0;
  options->verbose = 0;
}

mnp_status mnp_run_config(const mnp_run_options* options, char** json_out) {
  return guarded([&] {
    require(json_out != nullptr, "json_out must not be null");
    *json_out = dup_string(resolve(options).to_json().dump(2) + "\n");
  });
}

mnp_status mnp_run_gen_envs(const mnp_run_options* options) {
  return guarded([&] {
    const auto cfg = resolve(options);
    const auto set = mnp::gen_envs(cfg);
    progress(options, "wrote " + std::to_string(set.seen_files.size()) + " seen and " +
                          std::to_string(set.unseen_files.size()) + " unseen scenes");
  });
}

mnp_status mnp_run_gen_data(const mnp_run_options* options) {
  return guarded([&] {
    const auto cfg = resolve(options);
    const auto rep = mnp::gen_data(cfg);
    progress(options, "wrote " + std::to_string(rep.data.samples.size()) + " samples from " +
                          std::to_string(rep.expert.size()) + " expert paths (" + std::to_string(rep.resampled) +
                          " resampled) to " + mnp::dataset_path(cfg));
  });
}

mnp_status mnp_run_gen_corridor(const mnp_run_options* options, int paths) {
  return guarded([&] {
    require(paths > 0, "paths must be positive");
    const auto cfg = resolve(options);
    auto rep = mnp::corridor_dataset(cfg, paths);
    const std::string dir = corridor_dir(cfg);
    mnp::save_scene(rep.data.scenes.front(), (std::filesystem::path(dir) / "corridor.json").string());
    const std::string file = (std::filesystem::path(dir) / "train.tsv").string();
    mnp::save_dataset(rep.data, file);
    progress(options, "wrote " + std::to_string(rep.data.samples.size()) + " corridor samples to " + file);
  });
}

mnp_status mnp_run_train(const mnp_run_options* options, int baseline, const char* dataset_path) {
  return guarded([&] {
    const auto cfg = resolve(options);
    const auto role = baseline ? mnp::ModelRole::mse_baseline : mnp::ModelRole::mnp;
    std::string data_file, ckpt_file;
    if (dataset_path) {
      data_file = dataset_path;
      const auto dir = std::filesystem::path(data_file).parent_path();
      ckpt_file = (dir / (std::string(mnp::to_string(role)) + ".ckpt")).string();
    }
    const auto res = mnp::train_stage(
        cfg, role,
        [&](int epoch, double train, double val) {
          progress(options, "epoch " + std::to_string(epoch) + " train " + describe(train) + " validation " + describe(val));
        },
        data_file, ckpt_file);
    progress(options, "trained " + std::to_string(res.report.epochs_run) + " epochs, best " +
                          std::to_string(res.report.best_epoch) + ", wrote " +
                          (ckpt_file.empty() ? mnp::checkpoint_path(cfg, role) : ckpt_file));
  });
}

mnp_status mnp_run_bench(const mnp_run_options* options, char** summary_text) {
  return guarded([&] {
    const auto cfg = resolve(options);
    auto load = [&](mnp::ModelRole role) -> std::optional<mnp::TrainedModel> {
      const std::string path = mnp::checkpoint_path(cfg, role);
      if (!std::filesystem::exists(path)) return std::nullopt;
      return mnp::TrainedModel(mnp::load_checkpoint(path));
    };
    const auto mnp_m = load(mnp::ModelRole::mnp);
    const auto mse_m = load(mnp::ModelRole::mse_baseline);
    const auto res = mnp::bench(cfg, mnp_m ? &*mnp_m : nullptr, mse_m ? &*mse_m : nullptr);
    progress(options, "ran " + std::to_string(res.records.size()) + " benchmark records");
    if (summary_text) *summary_text = dup_string(mnp::summary_text(res.summary));
  });
}

mnp_status mnp_multimodal_eval(const mnp_model* mnp_model_handle, const mnp_model* mse_model_handle,
                               const mnp_scene* scene, const double* c_t, const double* c_goal, size_t dof,
                               int n_draws, uint64_t seed, const char* svg_path, double* mnp_collision_rate,
                               double* mse_collision_rate) {
  return guarded([&] {
    require(mnp_model_handle && mse_model_handle && scene, "models and scene must not be null");
    const auto spec = mnp::RobotSpec::from_json(mnp_model_handle->model.checkpoint().metadata.at("robot"));
    const auto rm = spec.build(scene->scene.workspace);
    mnp::ProblemInstance q = mnp::corridor_query();
    if (c_t || c_goal) {
      require(c_t && c_goal, "c_t and c_goal must both be given or both be null");
      q.init = to_config(rm, c_t, dof);
      q.goal = to_config(rm, c_goal, dof);
    } else if (rm.dof() != 2) {
      mnp::fail(mnp::ErrorCode::invalid_argument, "the corridor query pose needs a planar point robot");
    }
    const auto rep = mnp::multimodal_eval(mnp_model_handle->model, mse_model_handle->model, rm, scene->scene, q.init,
                                          q.goal, n_draws, seed);
    if (svg_path) {
      mnp::SvgContent content;
      for (const auto& c : rep.mnp_draws) content.samples.push_back(c.head(scene->scene.dim()));
      for (const auto& c : rep.mse_draws) content.alt_samples.push_back(c.head(scene->scene.dim()));
      content.paths.push_back(mnp::Path{{q.init, q.goal}});
      content.title = "next-step draws: mixture red, regression green";
      mnp::write_file(svg_path, mnp::render_svg(scene->scene, content));
    }
    if (mnp_collision_rate) *mnp_collision_rate = rep.mnp_collision_rate;
    if (mse_collision_rate) *mse_collision_rate = rep.mse_collision_rate;
  });
}

mnp_status mnp_render_svg(const mnp_scene* scene, const char* robot, const mnp_path* const* paths, size_t path_count,
                          const char* out_path) {
  return guarded([&] {
    require(scene && out_path, "scene and out_path must not be null");
    require(path_count == 0 || paths, "paths must not be null when path_count > 0");
    mnp::SvgContent content;
    if (robot) content.robot = build_robot(robot, scene->scene);
    for (size_t i = 0; i < path_count; ++i) {
      require(paths[i] != nullptr, "path entries must not be null");
      if (content.robot && paths[i]->dof != static_cast<std::size_t>(content.robot->dof()))
        mnp::fail(mnp::ErrorCode::dimension_mismatch, "path dimension does not match the robot");
      if (paths[i]->dof < static_cast<std::size_t>(std::min(2, scene->scene.dim())))
        mnp::fail(mnp::ErrorCode::dimension_mismatch, "path has too few coordinates to draw");
      content.paths.push_back(to_path(*paths[i]));
    }
    mnp::write_file(out_path, mnp::render_svg(scene->scene, content));
  });
}

}  // extern "C"
