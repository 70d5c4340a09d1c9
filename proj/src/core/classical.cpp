#include "classical.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "error.hpp"

#if !defined(NDEBUG) || defined(MNP_CHECK_TREE)
#define MNP_TREE_CHECKS 1
#endif

namespace mnp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void debug_check(const Tree& tree) {
#ifdef MNP_TREE_CHECKS
  if (!tree.check_invariants()) fail(ErrorCode::numerical, "tree invariant violated");
#else
  (void)tree;
#endif
}

}  // namespace

std::size_t Tree::add_root(const Configuration& c) {
  if (!nodes_.empty()) fail(ErrorCode::invalid_argument, "tree already has a root");
  nodes_.push_back(c);
  normalized_.push_back(normalize(*model_, c));
  parent_.push_back(0);
  cost_.push_back(0.0);
  children_.emplace_back();
  return 0;
}

std::size_t Tree::add(const Configuration& c, std::size_t parent) {
  const std::size_t i = nodes_.size();
  nodes_.push_back(c);
  normalized_.push_back(normalize(*model_, c));
  parent_.push_back(parent);
  cost_.push_back(cost_[parent] + edge(parent, i));
  children_.emplace_back();
  children_[parent].push_back(i);
  return i;
}

void Tree::set_parent(std::size_t i, std::size_t parent) {
  auto& siblings = children_[parent_[i]];
  std::erase(siblings, i);
  parent_[i] = parent;
  children_[parent].push_back(i);
  std::vector<std::size_t> stack{i};
  while (!stack.empty()) {
    const std::size_t n = stack.back();
    stack.pop_back();
    cost_[n] = cost_[parent_[n]] + edge(parent_[n], n);
    for (std::size_t ch : children_[n]) stack.push_back(ch);
  }
}

std::size_t Tree::nearest(const Configuration& q) const {
  const Vec qn = normalize(*model_, q);
  std::size_t best = 0;
  double best_d = kInf;
  for (std::size_t i = 0; i < normalized_.size(); ++i) {
    const double d = (normalized_[i] - qn).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<std::size_t> Tree::near(const Configuration& q, double radius) const {
  const Vec qn = normalize(*model_, q);
  const double r2 = radius * radius;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < normalized_.size(); ++i)
    if ((normalized_[i] - qn).squaredNorm() <= r2) out.push_back(i);
  return out;
}

std::vector<Configuration> Tree::path_to(std::size_t i) const {
  std::vector<Configuration> rev;
  for (std::size_t n = i;; n = parent_[n]) {
    rev.push_back(nodes_[n]);
    if (n == 0) break;
  }
  return {rev.rbegin(), rev.rend()};
}

bool Tree::check_invariants(double tol) const {
  if (nodes_.empty()) return true;
  if (parent_[0] != 0 || cost_[0] != 0.0) return false;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (parent_[i] >= nodes_.size() || parent_[i] == i) return false;
    const double expected = cost_[parent_[i]] + edge(parent_[i], i);
    if (std::abs(cost_[i] - expected) > tol * std::max(1.0, expected)) return false;
    // Every node must reach the root within size() hops.
    std::size_t n = i, hops = 0;
    while (n != 0 && hops <= nodes_.size()) {
      n = parent_[n];
      ++hops;
    }
    if (n != 0) return false;
  }
  return true;
}

void validate(const PlannerBudget& b) {
  if (b.max_iterations < 1) fail(ErrorCode::config, "planner max_iterations must be positive");
  if (!(b.goal_bias > 0.0 && b.goal_bias < 1.0)) fail(ErrorCode::config, "goal_bias must lie in (0, 1)");
  if (!(b.eta > 0.0)) fail(ErrorCode::config, "steer step eta must be positive");
  if (!(b.gamma > 0.0)) fail(ErrorCode::config, "rewire constant gamma must be positive");
}

namespace {

void check_endpoints(const RobotModel& model, const Scene& scene, const Configuration& init,
                     const Configuration& goal) {
  if (phi(model, init, scene)) fail(ErrorCode::invalid_argument, "start configuration is in collision");
  if (phi(model, goal, scene)) fail(ErrorCode::invalid_argument, "goal configuration is in collision");
}

Configuration steer_towards(const RobotModel& model, const Configuration& from, const Configuration& to,
                            double eta) {
  const double d = distance(model, from, to);
  if (d <= eta) return to;
  return from + (eta / d) * (to - from);
}

Path finish_path(const Tree& tree, std::size_t node, const Configuration& goal) {
  Path p{tree.path_to(node)};
  if (p.back() != goal) p.waypoints.push_back(goal);
  return p;
}

bool over_budget(const PlannerBudget& b, Clock::time_point start) {
  return b.max_time > 0.0 && seconds_since(start) >= b.max_time;
}

PlannerResult rrt_star_impl(const RobotModel& model, const Scene& scene, const Configuration& init,
                            const Configuration& goal, const PlannerBudget& budget, Rng& rng,
                            const PlannerObserver* observer, bool informed) {
  validate(budget);
  check_endpoints(model, scene, init, goal);
  const auto start = Clock::now();
  const double d = model.dof();

  PlannerResult result;
  result.best_cost = kInf;
  Tree tree(model);
  tree.add_root(init);
  std::vector<std::size_t> goal_nodes;
  std::size_t best_goal_node = 0;

  const InformedSampler sampler(normalize(model, init), normalize(model, goal));

  auto try_goal = [&](std::size_t i) {
    const double dg = distance(model, tree.node(i), goal);
    if (dg <= budget.eta && steer_to(model, tree.node(i), goal, scene)) goal_nodes.push_back(i);
  };
  auto refresh_best = [&](int iteration) {
    for (std::size_t g : goal_nodes) {
      const double c = tree.cost(g) + distance(model, tree.node(g), goal);
      if (c < result.best_cost) {
        result.best_cost = c;
        best_goal_node = g;
      }
    }
    if (!goal_nodes.empty() && (result.cost_trace.empty() || result.cost_trace.back().second != result.best_cost))
      result.cost_trace.emplace_back(iteration, result.best_cost);
  };

  try_goal(0);
  refresh_best(0);

  int it = 0;
  for (; it < budget.max_iterations; ++it) {
    if (budget.stop_at_cost && result.best_cost <= *budget.stop_at_cost) break;
    if (over_budget(budget, start)) break;

    const bool informed_phase = informed && std::isfinite(result.best_cost);
    Configuration q;
    if (rng.uniform() < budget.goal_bias) {
      q = goal;
    } else if (informed_phase) {
      Vec x;
      for (int attempt = 0; attempt < 10000; ++attempt) {
        x = denormalize(model, sampler.sample(result.best_cost, rng));
        if (model.within_bounds(x)) break;
        x = denormalize(model, 0.5 * (normalize(model, init) + normalize(model, goal)));
      }
      q = x;
    } else {
      q = sample_configuration(model, rng);
    }
    if (observer && observer->on_sample) observer->on_sample(q, informed_phase, result.best_cost);

    const std::size_t nearest = tree.nearest(q);
    const Configuration x_new = steer_towards(model, tree.node(nearest), q, budget.eta);
    if (!steer_to(model, tree.node(nearest), x_new, scene)) continue;

    const double n = static_cast<double>(tree.size() + 1);
    const double radius = std::min(budget.gamma * std::pow(std::log(n) / n, 1.0 / d), budget.eta);
    const auto near = tree.near(x_new, radius);

    std::size_t parent = nearest;
    double parent_cost = tree.cost(nearest) + distance(model, tree.node(nearest), x_new);
    for (std::size_t i : near) {
      if (i == nearest) continue;
      const double c = tree.cost(i) + distance(model, tree.node(i), x_new);
      if (c < parent_cost && steer_to(model, tree.node(i), x_new, scene)) {
        parent = i;
        parent_cost = c;
      }
    }
    const std::size_t id = tree.add(x_new, parent);
    debug_check(tree);

    for (std::size_t i : near) {
      if (i == parent) continue;
      const double c = tree.cost(id) + distance(model, x_new, tree.node(i));
      if (c < tree.cost(i) - 1e-12 && steer_to(model, x_new, tree.node(i), scene)) {
        tree.set_parent(i, id);
        debug_check(tree);
      }
    }
    if (observer && observer->on_tree_change) observer->on_tree_change(tree);

    try_goal(id);
    refresh_best(it + 1);
  }

  result.iterations = it;
  result.elapsed = seconds_since(start);
  if (!goal_nodes.empty()) result.path = finish_path(tree, best_goal_node, goal);
  return result;
}

}  // namespace

PlannerResult rrt(const RobotModel& model, const Scene& scene, const Configuration& init, const Configuration& goal,
                  const PlannerBudget& budget, Rng& rng, const PlannerObserver* observer) {
  validate(budget);
  check_endpoints(model, scene, init, goal);
  const auto start = Clock::now();
  PlannerResult result;
  result.best_cost = kInf;
  Tree tree(model);
  tree.add_root(init);

  auto finish = [&](std::size_t node, int iteration) {
    result.path = finish_path(tree, node, goal);
    result.best_cost = path_length(model, *result.path);
    result.cost_trace.emplace_back(iteration, result.best_cost);
    result.iterations = iteration;
    result.elapsed = seconds_since(start);
    return result;
  };

  if (steer_to(model, init, goal, scene)) return finish(0, 0);

  for (int it = 0; it < budget.max_iterations; ++it) {
    if (over_budget(budget, start)) {
      result.iterations = it;
      break;
    }
    const Configuration q = rng.uniform() < budget.goal_bias ? goal : sample_configuration(model, rng);
    if (observer && observer->on_sample) observer->on_sample(q, false, result.best_cost);
    const std::size_t nearest = tree.nearest(q);
    const Configuration x_new = steer_towards(model, tree.node(nearest), q, budget.eta);
    if (!steer_to(model, tree.node(nearest), x_new, scene)) continue;
    const std::size_t id = tree.add(x_new, nearest);
    debug_check(tree);
    if (observer && observer->on_tree_change) observer->on_tree_change(tree);
    if (steer_to(model, x_new, goal, scene)) return finish(id, it + 1);
    result.iterations = it + 1;
  }
  result.elapsed = seconds_since(start);
  return result;
}

PlannerResult rrt_star(const RobotModel& model, const Scene& scene, const Configuration& init,
                       const Configuration& goal, const PlannerBudget& budget, Rng& rng,
                       const PlannerObserver* observer) {
  return rrt_star_impl(model, scene, init, goal, budget, rng, observer, false);
}

PlannerResult informed_rrt_star(const RobotModel& model, const Scene& scene, const Configuration& init,
                                const Configuration& goal, const PlannerBudget& budget, Rng& rng,
                                const PlannerObserver* observer) {
  return rrt_star_impl(model, scene, init, goal, budget, rng, observer, true);
}

InformedSampler::InformedSampler(const Vec& a, const Vec& b) : center_(0.5 * (a + b)), c_min_((b - a).norm()) {
  const Eigen::Index d = a.size();
  rotation_ = Eigen::MatrixXd::Identity(d, d);
  if (c_min_ > 0.0) {
    // Householder reflection taking e1 onto the focal axis.
    Eigen::VectorXd axis = (b - a) / c_min_;
    Eigen::VectorXd v = Eigen::VectorXd::Unit(d, 0) - axis;
    const double vv = v.squaredNorm();
    if (vv > 1e-24) rotation_ -= 2.0 * v * v.transpose() / vv;
  }
}

Vec InformedSampler::sample(double c_best, Rng& rng) const {
  const Eigen::Index d = center_.size();
  Eigen::VectorXd ball(d);
  double norm = 0.0;
  do {
    for (Eigen::Index k = 0; k < d; ++k) ball[k] = rng.normal();
    norm = ball.norm();
  } while (norm == 0.0);
  ball *= std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / norm;
  const double c = std::max(c_best, c_min_);
  const double r1 = 0.5 * c;
  const double r_other = 0.5 * std::sqrt(std::max(0.0, c * c - c_min_ * c_min_));
  ball[0] *= r1;
  for (Eigen::Index k = 1; k < d; ++k) ball[k] *= r_other;
  return center_ + (rotation_ * ball);
}

bool in_informed_set(const RobotModel& model, const Configuration& init, const Configuration& goal,
                     const Configuration& x, double c_best, double rel_tol) {
  const double s = distance(model, init, x) + distance(model, x, goal);
  return s <= c_best * (1.0 + rel_tol) + 1e-12;
}

Path path_simplify(const RobotModel& model, const Path& path, const Scene& scene) {
  std::vector<Configuration> free;
  for (const auto& c : path.waypoints)
    if (!phi(model, c, scene)) free.push_back(c);
  Path out;
  if (free.empty()) return out;
  out.waypoints.push_back(free.front());
  std::size_t anchor = 0;
  const std::size_t last = free.size() - 1;
  while (anchor < last) {
    std::size_t j = last;
    while (j > anchor + 1 && !steer_to(model, free[anchor], free[j], scene)) --j;
    out.waypoints.push_back(free[j]);
    anchor = j;
  }
  return out;
}

}  // namespace mnp
