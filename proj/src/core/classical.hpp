#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "robots.hpp"

namespace mnp {

/// Planner search tree. Nodes are stored alongside their normalized
/// coordinates; cost[i] = cost[parent[i]] + distance(parent, i), root cost 0.
class Tree {
 public:
  explicit Tree(const RobotModel& model) : model_(&model) {}

  std::size_t add_root(const Configuration& c);
  std::size_t add(const Configuration& c, std::size_t parent);
  /// Reparents node i and propagates the cost change to its subtree.
  void set_parent(std::size_t i, std::size_t parent);

  std::size_t size() const { return nodes_.size(); }
  const Configuration& node(std::size_t i) const { return nodes_[i]; }
  std::size_t parent(std::size_t i) const { return parent_[i]; }
  double cost(std::size_t i) const { return cost_[i]; }

  /// Lowest-index node among those closest to q (linear scan).
  std::size_t nearest(const Configuration& q) const;
  std::vector<std::size_t> near(const Configuration& q, double radius) const;
  std::vector<Configuration> path_to(std::size_t i) const;

  /// Parent forest rooted at 0 plus the cost recurrence within tol.
  bool check_invariants(double tol = 1e-9) const;

 private:
  double edge(std::size_t a, std::size_t b) const { return (normalized_[a] - normalized_[b]).norm(); }

  const RobotModel* model_;
  std::vector<Configuration> nodes_;
  std::vector<Vec> normalized_;
  std::vector<std::size_t> parent_;
  std::vector<double> cost_;
  std::vector<std::vector<std::size_t>> children_;
};

struct PlannerBudget {
  int max_iterations = 20000;
  double max_time = 60.0;  // seconds; <= 0 disables the wall-clock limit
  double goal_bias = 0.05;
  double eta = 0.1;    // steer step, normalized units
  double gamma = 2.0;  // rewire radius constant
  /// Anytime planners stop once the best cost is at or below this value.
  std::optional<double> stop_at_cost;
};

void validate(const PlannerBudget& budget);

/// Optional hooks for tests and tracing.
struct PlannerObserver {
  std::function<void(const Configuration& sample, bool informed, double best_cost)> on_sample;
  std::function<void(const Tree& tree)> on_tree_change;
};

struct PlannerResult {
  std::optional<Path> path;
  int iterations = 0;
  double elapsed = 0.0;
  double best_cost = 0.0;  // +inf when no solution
  /// (iteration, best cost) every time the best cost changes.
  std::vector<std::pair<int, double>> cost_trace;

  bool success() const { return path.has_value(); }
};

/// Goal is connected as soon as a new node (or the root) can steer_to it.
PlannerResult rrt(const RobotModel& model, const Scene& scene, const Configuration& init, const Configuration& goal,
                  const PlannerBudget& budget, Rng& rng, const PlannerObserver* observer = nullptr);

PlannerResult rrt_star(const RobotModel& model, const Scene& scene, const Configuration& init,
                       const Configuration& goal, const PlannerBudget& budget, Rng& rng,
                       const PlannerObserver* observer = nullptr);

/// rrt_star until the first solution; afterwards samples come from the
/// prolate hyperspheroid of the current best cost.
PlannerResult informed_rrt_star(const RobotModel& model, const Scene& scene, const Configuration& init,
                                const Configuration& goal, const PlannerBudget& budget, Rng& rng,
                                const PlannerObserver* observer = nullptr);

/// Uniform sampling of { x : |x - a| + |x - b| <= c_best } in normalized
/// coordinates via a unit-ball transform.
class InformedSampler {
 public:
  InformedSampler(const Vec& a_normalized, const Vec& b_normalized);

  Vec sample(double c_best, Rng& rng) const;
  double c_min() const { return c_min_; }

 private:
  Vec center_;
  Eigen::MatrixXd rotation_;
  double c_min_;
};

bool in_informed_set(const RobotModel& model, const Configuration& init, const Configuration& goal,
                     const Configuration& x, double c_best, double rel_tol = 1e-9);

/// Drops colliding waypoints, then keeps only the farthest steerable
/// successor from each anchor.
Path path_simplify(const RobotModel& model, const Path& path, const Scene& scene);

}  // namespace mnp
