#pragma once

#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "classical.hpp"
#include "planner_nets.hpp"

namespace mnp {

struct BiPlanConfig {
  int n_iter = 50;  // outer iterations
  int n_col = 10;   // candidate draws per iteration

  void validate() const;
  nlohmann::json to_json() const;
  static BiPlanConfig from_json(const nlohmann::json& j);
};

/// Source of next-configuration candidates for the bidirectional planner.
class StepProposer {
 public:
  virtual ~StepProposer() = default;
  virtual void condition(const Configuration& current, const Configuration& goal) = 0;
  virtual Configuration draw(Rng& rng) = 0;
};

/// Adapts a trained checkpoint (either role) to StepProposer.
class NeuralProposer : public StepProposer {
 public:
  NeuralProposer(const TrainedModel& model, const RobotModel& robot, Eigen::VectorXd z)
      : sampler_(model, robot, std::move(z)) {}
  void condition(const Configuration& current, const Configuration& goal) override {
    sampler_.condition(current, goal);
  }
  Configuration draw(Rng& rng) override { return sampler_.draw(rng); }

 private:
  NextStepSampler sampler_;
};

struct TraceEntry {
  int iteration = 0;
  bool from_init = true;  // which side was extended
  int attempts = 0;       // candidates drawn this iteration
  bool steer_ok = false;  // false when the last colliding candidate was appended anyway
  bool connected = false;
  Configuration candidate;
};

using Trace = std::vector<TraceEntry>;

/// "iteration side attempts steer_ok connected coords..." per line; side is a or b.
std::string trace_to_text(const Trace& trace);

/// Grows one partial path from each endpoint, alternating sides, until the
/// two ends can be joined. Empty on budget exhaustion.
std::optional<Path> bidirectional_plan(const RobotModel& model, const Scene& scene, const Configuration& init,
                                       const Configuration& goal, StepProposer& proposer, const BiPlanConfig& config,
                                       Rng& rng, Trace* trace = nullptr);

/// Plans a connector between two configurations; empty on failure.
using SegmentPlanner = std::function<std::optional<Path>(const Configuration& a, const Configuration& b, Rng& rng)>;

SegmentPlanner rrt_segment_planner(const RobotModel& model, const Scene& scene, const PlannerBudget& budget);

struct ReplanResult {
  std::optional<Path> path;
  int segments_replanned = 0;
};

/// Simplifies, keeps steerable neighbours, and splices a simplified
/// connector in place of every infeasible pair.
ReplanResult replan(const RobotModel& model, const Scene& scene, const Path& path, const SegmentPlanner& planner,
                    Rng& rng);

/// Number of adjacent waypoint pairs that fail steer_to.
int infeasible_pairs(const RobotModel& model, const Path& path, const Scene& scene);

enum class PlanStatus { direct_success, replanned_success, failure };
const char* to_string(PlanStatus s);

enum class ReplanMode {
  none,    // bidirectional pass and simplification only
  rrt,     // repair with RRT
  neural,  // repair with the bidirectional planner itself
};

struct PlanTimings {
  double encode = 0.0;
  double bidirectional = 0.0;
  double simplify = 0.0;
  double replan = 0.0;
  double fallback = 0.0;
  double total = 0.0;
};

struct NeuralPlanConfig {
  BiPlanConfig bp;
  ReplanMode replan = ReplanMode::rrt;
  PlannerBudget replan_budget;
  /// Pure RRT between the endpoints when the bidirectional pass returns
  /// nothing and a replanner is configured.
  bool fallback = true;

  nlohmann::json to_json() const;
};

struct PlanOutcome {
  std::optional<Path> path;
  PlanStatus status = PlanStatus::failure;
  PlanTimings timings;
  int replan_segment_count = 0;
  bool used_fallback = false;
  BiPlanConfig config;

  bool success() const { return status != PlanStatus::failure; }
};

/// Encode, bidirectional pass, simplify, then repair if needed.
PlanOutcome neural_plan(const RobotModel& model, const Scene& scene, const Configuration& init,
                        const Configuration& goal, const TrainedModel& net, const NeuralPlanConfig& config, Rng& rng,
                        Trace* trace = nullptr);

/// Same as neural_plan with a precomputed scene encoding; timings.encode is left at zero.
PlanOutcome neural_plan_encoded(const RobotModel& model, const Scene& scene, const Configuration& init,
                                const Configuration& goal, const TrainedModel& net, const Eigen::VectorXd& z,
                                const NeuralPlanConfig& config, Rng& rng, Trace* trace = nullptr);

}  // namespace mnp
