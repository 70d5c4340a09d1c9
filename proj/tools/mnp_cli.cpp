// Command-line driver over the C API.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mnp/mnp.h"

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPlanFailure = 3;

struct CliError {
  int exit_code;
};

int exit_for(mnp_status s) { return s == MNP_ERR_CONFIG ? kExitConfig : kExitError; }

void check(mnp_status s, const char* what) {
  if (s == MNP_OK) return;
  std::fprintf(stderr, "mnp: %s: %s (%s)\n", what, mnp_last_error(), mnp_status_name(s));
  throw CliError{exit_for(s)};
}

std::vector<double> parse_config(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || *end != '\0') {
      std::fprintf(stderr, "mnp: %s: '%s' is not a comma-separated list of numbers\n", flag, text.c_str());
      throw CliError{kExitConfig};
    }
    out.push_back(v);
  }
  return out;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() {
    if (p) Free(p);
  }
};

using SceneHandle = Handle<mnp_scene, mnp_scene_free>;
using ModelHandle = Handle<mnp_model, mnp_model_free>;
using PathHandle = Handle<mnp_path, mnp_path_free>;

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out_dir;
  bool paper_scale = false;
  bool strict_paper = false;
  bool quiet = false;

  mnp_run_options options() const {
    mnp_run_options o;
    mnp_run_options_default(&o);
    o.config_path = config.empty() ? nullptr : config.c_str();
    o.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
    if (seed) {
      o.seed = *seed;
      o.has_seed = 1;
    }
    o.paper_scale = paper_scale;
    o.strict_paper = strict_paper;
    o.verbose = !quiet;
    return o;
  }
};

std::string corridor_file(const Globals& g, const char* name) {
  char* json = nullptr;
  const auto o = g.options();
  check(mnp_run_config(&o, &json), "config");
  const auto cfg = nlohmann::json::parse(json);
  mnp_string_free(json);
  return cfg.at("out_dir").get<std::string>() + "/corridor/" + name;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal neural motion planner"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_flag("--paper-scale", g.paper_scale, "Full-size scene counts and networks");
  app.add_flag("--strict-paper", g.strict_paper, "Disable the RRT fallback after an empty bidirectional pass");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  auto* gen_envs = app.add_subcommand("gen-envs", "Generate seen and unseen scenes");

  auto* gen_data = app.add_subcommand("gen-data", "Generate expert training data");
  int corridor_paths = 0;
  gen_data->add_option("--corridor", corridor_paths, "Generate the corridor dataset with this many paths instead");

  std::string dataset;
  auto* train = app.add_subcommand("train", "Train the mixture planner");
  train->add_option("--dataset", dataset, "Dataset file (default: the run's dataset)");
  auto* train_baseline = app.add_subcommand("train-baseline", "Train the regression baseline");
  train_baseline->add_option("--dataset", dataset, "Dataset file (default: the run's dataset)");

  auto* plan = app.add_subcommand("plan", "Plan one query");
  std::string scene_file, model_file, start_text, goal_text, robot = "point2d", mode = "rrt", trace_file, out_file,
                                                                   classical;
  int n_iter = 50, n_col = 10, max_iter = 20000;
  double max_time = 10.0;
  uint64_t plan_seed = 1;
  plan->add_option("--scene", scene_file, "Scene JSON")->required()->check(CLI::ExistingFile);
  plan->add_option("--model", model_file, "Checkpoint (neural planning)")->check(CLI::ExistingFile);
  plan->add_option("--start", start_text, "Start configuration, comma separated")->required();
  plan->add_option("--goal", goal_text, "Goal configuration, comma separated")->required();
  plan->add_option("--robot", robot, "point2d, point3d, rigid2d or nlink2d(k)");
  plan->add_option("--mode", mode, "Repair mode")->check(CLI::IsMember({"origin", "rrt", "neural"}));
  plan->add_option("--classical", classical, "Run a classical planner instead")
      ->check(CLI::IsMember({"rrt", "rrt_star", "irrt_star"}));
  plan->add_option("--n-iter", n_iter, "Bidirectional iterations");
  plan->add_option("--n-col", n_col, "Draws per iteration");
  plan->add_option("--max-iterations", max_iter, "RRT iteration budget");
  plan->add_option("--max-time", max_time, "RRT time budget in seconds");
  plan->add_option("--plan-seed", plan_seed, "Planner seed");
  plan->add_option("--trace", trace_file, "Write the bidirectional trace here");
  plan->add_option("--out", out_file, "Write the path here");

  auto* bench = app.add_subcommand("bench", "Run the benchmark suite");

  auto* viz = app.add_subcommand("viz", "Render a scene and paths to SVG");
  std::vector<std::string> path_files;
  std::string svg_out = "scene.svg", viz_robot;
  viz->add_option("--scene", scene_file, "Scene JSON")->required()->check(CLI::ExistingFile);
  viz->add_option("--path", path_files, "Path file (repeatable)")->check(CLI::ExistingFile);
  viz->add_option("--robot", viz_robot, "Draw robot bodies at waypoints");
  viz->add_option("--out", svg_out, "Output SVG");

  auto* mm = app.add_subcommand("multimodal-eval", "Next-step collision rates of both models");
  std::string mnp_ckpt, mse_ckpt, mm_svg;
  int draws = 500;
  mm->add_option("--mnp", mnp_ckpt, "Mixture checkpoint (default: corridor model)");
  mm->add_option("--mse", mse_ckpt, "Baseline checkpoint (default: corridor model)");
  mm->add_option("--scene", scene_file, "Scene JSON (default: corridor scene)");
  mm->add_option("--start", start_text, "Current configuration (default: corridor query)");
  mm->add_option("--goal", goal_text, "Goal configuration (default: corridor query)");
  mm->add_option("--draws", draws, "Draws per model");
  mm->add_option("--svg", mm_svg, "Scatter plot output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const mnp_run_options opts = g.options();
    if (*gen_envs) {
      check(mnp_run_gen_envs(&opts), "gen-envs");
    } else if (*gen_data) {
      if (corridor_paths > 0)
        check(mnp_run_gen_corridor(&opts, corridor_paths), "gen-data");
      else
        check(mnp_run_gen_data(&opts), "gen-data");
    } else if (*train || *train_baseline) {
      check(mnp_run_train(&opts, *train_baseline ? 1 : 0, dataset.empty() ? nullptr : dataset.c_str()), "train");
    } else if (*bench) {
      char* text = nullptr;
      check(mnp_run_bench(&opts, &text), "bench");
      std::fputs(text, stdout);
      mnp_string_free(text);
    } else if (*plan) {
      SceneHandle scene;
      check(mnp_scene_load(scene_file.c_str(), &scene.p), "scene");
      const auto start = parse_config(start_text, "--start");
      const auto goal = parse_config(goal_text, "--goal");
      if (start.size() != goal.size()) {
        std::fprintf(stderr, "mnp: --start and --goal differ in length\n");
        return kExitConfig;
      }
      const uint64_t seed = g.seed ? *g.seed : plan_seed;
      PathHandle path;
      if (!classical.empty()) {
        check(mnp_plan_classical(scene.p, robot.c_str(), classical.c_str(), start.data(), goal.data(), start.size(),
                                 max_iter, max_time, seed, &path.p),
              "plan");
      } else {
        if (model_file.empty()) {
          std::fprintf(stderr, "mnp: plan needs --model or --classical\n");
          return kExitConfig;
        }
        ModelHandle model;
        check(mnp_model_load(model_file.c_str(), &model.p), "model");
        mnp_plan_options po;
        mnp_plan_options_default(&po);
        po.n_iter = n_iter;
        po.n_col = n_col;
        po.replan = mode == "origin" ? MNP_REPLAN_NONE : mode == "neural" ? MNP_REPLAN_NEURAL : MNP_REPLAN_RRT;
        po.fallback = g.strict_paper || mode != "rrt" ? 0 : 1;
        po.replan_max_iterations = max_iter;
        po.replan_max_time = max_time;
        check(mnp_plan(scene.p, model.p, robot.c_str(), start.data(), goal.data(), start.size(), &po, seed,
                       trace_file.empty() ? nullptr : trace_file.c_str(), &path.p),
              "plan");
      }
      const auto status = mnp_path_status(path.p);
      if (status == MNP_PLAN_FAILURE) {
        std::fprintf(stderr, "mnp: no path found (%.6f s)\n", mnp_path_time(path.p));
        return kExitPlanFailure;
      }
      if (!out_file.empty()) check(mnp_path_save(path.p, out_file.c_str()), "write path");
      std::printf("%s waypoints=%zu length=%.6f time=%.6f\n",
                  status == MNP_PLAN_DIRECT_SUCCESS ? "direct_success" : "replanned_success",
                  mnp_path_waypoint_count(path.p), mnp_path_length(path.p), mnp_path_time(path.p));
    } else if (*viz) {
      SceneHandle scene;
      check(mnp_scene_load(scene_file.c_str(), &scene.p), "scene");
      std::vector<PathHandle> paths(path_files.size());
      std::vector<const mnp_path*> raw;
      for (std::size_t i = 0; i < path_files.size(); ++i) {
        check(mnp_path_load(path_files[i].c_str(), &paths[i].p), "path");
        raw.push_back(paths[i].p);
      }
      check(mnp_render_svg(scene.p, viz_robot.empty() ? nullptr : viz_robot.c_str(), raw.data(), raw.size(),
                           svg_out.c_str()),
            "viz");
    } else if (*mm) {
      if (scene_file.empty()) scene_file = corridor_file(g, "corridor.json");
      if (mnp_ckpt.empty()) mnp_ckpt = corridor_file(g, "mnp.ckpt");
      if (mse_ckpt.empty()) mse_ckpt = corridor_file(g, "mse_baseline.ckpt");
      SceneHandle scene;
      ModelHandle a, b;
      check(mnp_scene_load(scene_file.c_str(), &scene.p), "scene");
      check(mnp_model_load(mnp_ckpt.c_str(), &a.p), "mixture model");
      check(mnp_model_load(mse_ckpt.c_str(), &b.p), "baseline model");
      std::vector<double> start, goal;
      if (!start_text.empty() || !goal_text.empty()) {
        start = parse_config(start_text, "--start");
        goal = parse_config(goal_text, "--goal");
      }
      double ra = 0.0, rb = 0.0;
      const uint64_t seed = g.seed ? *g.seed : 1;
      check(mnp_multimodal_eval(a.p, b.p, scene.p, start.empty() ? nullptr : start.data(),
                                goal.empty() ? nullptr : goal.data(), start.size(), draws, seed,
                                mm_svg.empty() ? nullptr : mm_svg.c_str(), &ra, &rb),
            "multimodal-eval");
      std::printf("mnp_collision_rate %.4f\nmse_collision_rate %.4f\n", ra, rb);
    }
  } catch (const CliError& e) {
    return e.exit_code;
  }
  return 0;
}
