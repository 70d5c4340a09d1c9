#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "classical.hpp"
#include "neural_planner.hpp"
#include "planner_nets.hpp"

namespace mnp {

struct BenchConfig {
  int problems_per_env = 10;
  int seen_envs = 0;    // 0 = every seen environment
  int unseen_envs = 0;  // 0 = every unseen environment
  /// Budget for the optimality baselines; time counts as the full budget on failure.
  PlannerBudget classical{20000, 10.0, 0.05, 0.1, 2.0, std::nullopt};
  double target_factor = 1.1;
  /// Problem verification: RRT with this budget must find a path.
  PlannerBudget verify{50000, 30.0, 0.05, 0.1, 2.0, std::nullopt};
  std::vector<std::string> methods{"mnp_origin", "mnp_rrt", "mse_nr", "mse_hr", "rrt_star", "irrt_star"};
};

/// Everything a run needs; serialized into every artifact it produces.
struct RunConfig {
  std::string scene_class = "simple2d";
  int seen = 60;
  int unseen = 10;
  int cloud_points = 300;
  RobotSpec robot;
  int paths_per_scene = 40;
  /// Expert planner budget (iteration-bounded so data generation is reproducible).
  PlannerBudget expert{3000, 20.0, 0.05, 0.1, 2.0, std::nullopt};
  bool expert_informed = false;
  bool include_reversed = true;
  /// Keep samples whose next configuration is the goal itself.
  bool keep_goal_targets = false;
  ArchitectureConfig arch;
  TrainingConfig training;
  BiPlanConfig bp;
  PlannerBudget replan{20000, 10.0, 0.05, 0.1, 2.0, std::nullopt};
  bool strict_paper = false;  // disables the RRT fallback after an empty bidirectional pass
  BenchConfig bench;
  int workers = 1;
  std::uint64_t seed = 1;
  std::string out_dir = "mnp_run";

  static RunConfig desk();
  static RunConfig paper_scale();
  void validate() const;
  nlohmann::json to_json() const;
  /// Keys absent from j keep the values of base.
  static RunConfig from_json(const nlohmann::json& j, const RunConfig& base = RunConfig::desk());
};

RunConfig load_run_config(const std::string& path, const RunConfig& base = RunConfig::desk());

nlohmann::json budget_to_json(const PlannerBudget& b);
PlannerBudget budget_from_json(const nlohmann::json& j, const PlannerBudget& base);

/// Stable hash of the canonical JSON form of a config.
std::string config_hash(const RunConfig& cfg);

// ------------------------------------------------------------------ layout

std::string scene_path(const RunConfig& cfg, bool seen, int index);
std::string dataset_path(const RunConfig& cfg);
std::string checkpoint_path(const RunConfig& cfg, ModelRole role);

// ------------------------------------------------------------------ stages

struct EnvSet {
  std::vector<std::string> seen_files;
  std::vector<std::string> unseen_files;
};

/// Scene for set member i; seen and unseen sets draw from disjoint seed streams.
Scene make_env(const RunConfig& cfg, bool seen, int index);
EnvSet gen_envs(const RunConfig& cfg);

struct ProblemInstance {
  Configuration init;
  Configuration goal;
};

/// Random start/goal pair that is collision-free and not straight-line connectable.
ProblemInstance sample_problem(const RobotModel& model, const Scene& scene, Rng& rng, int max_attempts = 10000);

struct ExpertPath {
  std::size_t scene = 0;
  Path path;
  double cost = 0.0;
};

struct DataGenReport {
  Dataset data;
  std::vector<ExpertPath> expert;
  int resampled = 0;  // problems replaced after expert failure
};

/// Expert paths for paths_per_scene problems per scene, split into
/// (c_i, c_goal, c_{i+1}) samples.
DataGenReport generate_expert_data(const RunConfig& cfg, const std::vector<Scene>& scenes,
                                   const std::vector<std::string>& scene_files, std::uint64_t stream);

/// Path -> samples (c_i, c_last, c_{i+1}); reversed copy when requested.
void append_path_samples(Dataset& data, std::size_t scene, const Path& path, bool include_reversed,
                         bool keep_goal_targets);

DataGenReport gen_data(const RunConfig& cfg);

/// Trains on dataset_file (default: the run's dataset) and writes the
/// checkpoint to checkpoint_file (default: the run's model path).
TrainResult train_stage(const RunConfig& cfg, ModelRole role, const EpochLogger& log = {},
                        const std::string& dataset_file = {}, const std::string& checkpoint_file = {});

struct BenchRecord {
  std::string method;
  int env_id = 0;
  int problem_id = 0;
  bool seen = true;
  bool success = false;
  double time = 0.0;
  double length = 0.0;  // meaningful only on success
};

struct BenchSummaryRow {
  std::string method;
  bool seen = true;
  int runs = 0;
  double success_rate = 0.0;
  double mean_time_all = 0.0;
  double mean_time_success = 0.0;  // NaN without successes
  double mean_length = 0.0;        // NaN without successes
};

std::vector<BenchSummaryRow> summarize(const std::vector<BenchRecord>& records, const std::vector<std::string>& methods);
std::string summary_text(const std::vector<BenchSummaryRow>& rows);
std::string summary_csv(const std::vector<BenchSummaryRow>& rows);
std::string records_csv(const std::vector<BenchRecord>& records);

struct BenchProblem {
  int env_id = 0;
  int problem_id = 0;
  bool seen = true;
  ProblemInstance instance;
};

/// Verified-solvable, non-trivial problems for one scene.
std::vector<BenchProblem> make_bench_problems(const RunConfig& cfg, const RobotModel& model, const Scene& scene,
                                              int env_id, bool seen, int count);

/// Runs the selected methods on one problem. mnp_rrt runs before the
/// optimality baselines because it sets their target cost.
std::vector<BenchRecord> run_bench_problem(const RunConfig& cfg, const RobotModel& model, const Scene& scene,
                                           const BenchProblem& problem, const TrainedModel* mnp_model,
                                           const TrainedModel* mse_model, const std::vector<std::string>& methods);

struct BenchResult {
  std::vector<BenchRecord> records;
  std::vector<BenchSummaryRow> summary;
};

BenchResult bench(const RunConfig& cfg, const TrainedModel* mnp_model, const TrainedModel* mse_model);

// ------------------------------------------------------------------ analysis

struct MultimodalReport {
  double mnp_collision_rate = 0.0;
  double mse_collision_rate = 0.0;
  std::vector<Configuration> mnp_draws;
  std::vector<Configuration> mse_draws;
};

MultimodalReport multimodal_eval(const TrainedModel& mnp_model, const TrainedModel& mse_model, const RobotModel& robot,
                                 const Scene& scene, const Configuration& c_t, const Configuration& c_goal,
                                 int n_draws, std::uint64_t seed);

/// Symmetric bar-and-block scene used for the next-step multimodality
/// benchmark: going left or right around the bar costs the same.
Scene corridor_scene(int cloud_points, std::uint64_t seed);
/// Canonical query pose below the obstacle with the goal straight above it.
ProblemInstance corridor_query();
/// Expert dataset for the corridor scene with starts below and goals above
/// the obstacle.
DataGenReport corridor_dataset(const RunConfig& cfg, int paths);

struct SvgContent {
  std::vector<Path> paths;
  std::vector<Vec> samples;        // scatter (workspace coordinates)
  std::vector<Vec> alt_samples;    // second scatter colour
  std::optional<RobotModel> robot; // draws robot bodies at path waypoints when set
  std::string title;
};

/// Deterministic SVG; 3D scenes are projected onto the xy plane.
std::string render_svg(const Scene& scene, const SvgContent& content);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace mnp
