#include "neural_planner.hpp"

#include <chrono>

#include "error.hpp"

namespace mnp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void require_free(const RobotModel& model, const Scene& scene, const Configuration& init, const Configuration& goal) {
  if (phi(model, init, scene)) fail(ErrorCode::invalid_argument, "start configuration is in collision");
  if (phi(model, goal, scene)) fail(ErrorCode::invalid_argument, "goal configuration is in collision");
}

constexpr int kNeuralSegmentAttempts = 5;

}  // namespace

void BiPlanConfig::validate() const {
  if (n_iter < 1 || n_col < 1) fail(ErrorCode::config, "n_iter and n_col must be at least 1");
}

nlohmann::json BiPlanConfig::to_json() const { return {{"n_iter", n_iter}, {"n_col", n_col}}; }

BiPlanConfig BiPlanConfig::from_json(const nlohmann::json& j) {
  BiPlanConfig c;
  try {
    c.n_iter = j.value("n_iter", c.n_iter);
    c.n_col = j.value("n_col", c.n_col);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("planner config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string trace_to_text(const Trace& trace) {
  std::string out;
  for (const auto& e : trace) {
    out += std::to_string(e.iteration);
    out += e.from_init ? " a " : " b ";
    out += std::to_string(e.attempts);
    out += e.steer_ok ? " 1" : " 0";
    out += e.connected ? " 1" : " 0";
    for (Eigen::Index k = 0; k < e.candidate.size(); ++k) out += ' ' + format_double(e.candidate[k]);
    out += '\n';
  }
  return out;
}

std::optional<Path> bidirectional_plan(const RobotModel& model, const Scene& scene, const Configuration& init,
                                       const Configuration& goal, StepProposer& proposer, const BiPlanConfig& config,
                                       Rng& rng, Trace* trace) {
  config.validate();
  check_dim(model, init);
  check_dim(model, goal);
  std::vector<Configuration> a{init}, b{goal};
  bool a_from_init = true;
  auto joined = [&]() {
    // a and b may be swapped; orient the result init -> goal.
    const auto& head = a_from_init ? a : b;
    const auto& tail = a_from_init ? b : a;
    Path p;
    p.waypoints = head;
    p.waypoints.insert(p.waypoints.end(), tail.rbegin(), tail.rend());
    return p;
  };
  if (steer_to(model, init, goal, scene)) return Path{{init, goal}};
  for (int i = 0; i < config.n_iter; ++i) {
#ifndef NDEBUG
    if (!((a.front() == init && b.front() == goal && a_from_init) || (a.front() == goal && b.front() == init && !a_from_init)))
      fail(ErrorCode::invalid_argument, "bidirectional planner lost track of its roots");
#endif
    proposer.condition(a.back(), b.back());
    Configuration candidate;
    bool ok = false;
    int j = 0;
    while (j < config.n_col) {
      candidate = proposer.draw(rng);
      ++j;
      if (steer_to(model, a.back(), candidate, scene)) {
        ok = true;
        break;
      }
    }
    a.push_back(candidate);  // kept even when every draw failed
    const bool connected = steer_to(model, a.back(), b.back(), scene);
    if (trace) trace->push_back({i, a_from_init, j, ok, connected, candidate});
    if (connected) return joined();
    std::swap(a, b);
    a_from_init = !a_from_init;
  }
  return std::nullopt;
}

SegmentPlanner rrt_segment_planner(const RobotModel& model, const Scene& scene, const PlannerBudget& budget) {
  return [&model, &scene, budget](const Configuration& a, const Configuration& b, Rng& rng) -> std::optional<Path> {
    if (phi(model, a, scene) || phi(model, b, scene)) return std::nullopt;
    return rrt(model, scene, a, b, budget, rng).path;
  };
}

int infeasible_pairs(const RobotModel& model, const Path& path, const Scene& scene) {
  int n = 0;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!steer_to(model, path.waypoints[i - 1], path.waypoints[i], scene)) ++n;
  return n;
}

ReplanResult replan(const RobotModel& model, const Scene& scene, const Path& path, const SegmentPlanner& planner,
                    Rng& rng) {
  if (path.size() < 2) fail(ErrorCode::invalid_argument, "replan needs a path with at least two waypoints");
  ReplanResult r;
  const Path simple = path_simplify(model, path, scene);
  Path out;
  out.waypoints.push_back(simple.front());
  for (std::size_t i = 0; i + 1 < simple.size(); ++i) {
    const auto& from = simple.waypoints[i];
    const auto& to = simple.waypoints[i + 1];
    if (steer_to(model, from, to, scene)) {
      out.waypoints.push_back(to);
      continue;
    }
    auto connector = planner(from, to, rng);
    if (!connector || connector->size() < 2) return r;
    const Path c = path_simplify(model, *connector, scene);
    out.waypoints.insert(out.waypoints.end(), c.waypoints.begin() + 1, c.waypoints.end());
    ++r.segments_replanned;
  }
  r.path = std::move(out);
  return r;
}

const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::direct_success: return "direct_success";
    case PlanStatus::replanned_success: return "replanned_success";
    case PlanStatus::failure: return "failure";
  }
  return "failure";
}

nlohmann::json NeuralPlanConfig::to_json() const {
  const char* mode = replan == ReplanMode::none ? "none" : replan == ReplanMode::rrt ? "rrt" : "neural";
  return {{"bp", bp.to_json()},
          {"replan", mode},
          {"replan_max_iterations", replan_budget.max_iterations},
          {"replan_max_time", replan_budget.max_time},
          {"fallback", fallback}};
}

PlanOutcome neural_plan_encoded(const RobotModel& model, const Scene& scene, const Configuration& init,
                                const Configuration& goal, const TrainedModel& net, const Eigen::VectorXd& z,
                                const NeuralPlanConfig& config, Rng& rng, Trace* trace) {
  const auto t_start = Clock::now();
  require_free(model, scene, init, goal);
  PlanOutcome out;
  out.config = config.bp;
  NeuralProposer proposer(net, model, z);

  auto t0 = Clock::now();
  auto bp = bidirectional_plan(model, scene, init, goal, proposer, config.bp, rng, trace);
  out.timings.bidirectional = seconds_since(t0);

  SegmentPlanner segment;
  if (config.replan == ReplanMode::rrt) {
    segment = rrt_segment_planner(model, scene, config.replan_budget);
  } else if (config.replan == ReplanMode::neural) {
    segment = [&](const Configuration& a, const Configuration& b, Rng& r) -> std::optional<Path> {
      if (phi(model, a, scene) || phi(model, b, scene)) return std::nullopt;
      for (int attempt = 0; attempt < kNeuralSegmentAttempts; ++attempt) {
        auto p = bidirectional_plan(model, scene, a, b, proposer, config.bp, r);
        if (!p) continue;
        Path s = path_simplify(model, *p, scene);
        if (path_feasible(model, s, scene)) return s;
      }
      return std::nullopt;
    };
  }

  if (bp) {
    t0 = Clock::now();
    Path simple = path_simplify(model, *bp, scene);
    out.timings.simplify = seconds_since(t0);
    if (path_feasible(model, simple, scene)) {
      out.path = std::move(simple);
      out.status = PlanStatus::direct_success;
    } else if (segment) {
      t0 = Clock::now();
      auto rp = replan(model, scene, simple, segment, rng);
      out.timings.replan = seconds_since(t0);
      out.replan_segment_count = rp.segments_replanned;
      if (rp.path && path_feasible(model, *rp.path, scene)) {
        out.path = std::move(rp.path);
        out.status = PlanStatus::replanned_success;
      }
    }
  } else if (segment && config.fallback) {
    t0 = Clock::now();
    auto fb = rrt(model, scene, init, goal, config.replan_budget, rng);
    out.timings.fallback = seconds_since(t0);
    out.used_fallback = true;
    if (fb.path) {
      out.path = path_simplify(model, *fb.path, scene);
      out.status = PlanStatus::replanned_success;
    }
  }
  out.timings.total = seconds_since(t_start);
  return out;
}

PlanOutcome neural_plan(const RobotModel& model, const Scene& scene, const Configuration& init,
                        const Configuration& goal, const TrainedModel& net, const NeuralPlanConfig& config, Rng& rng,
                        Trace* trace) {
  const auto t0 = Clock::now();
  require_free(model, scene, init, goal);
  if (steer_to(model, init, goal, scene)) {
    // Straight-line problems need no encoding (and obstacle-free scenes have no cloud to encode).
    PlanOutcome out;
    out.config = config.bp;
    out.path = Path{{init, goal}};
    out.status = PlanStatus::direct_success;
    out.timings.total = seconds_since(t0);
    return out;
  }
  const Eigen::VectorXd z = net.encode(scene);
  const double encode = seconds_since(t0);
  PlanOutcome out = neural_plan_encoded(model, scene, init, goal, net, z, config, rng, trace);
  out.timings.encode = encode;
  out.timings.total += encode;
  return out;
}

}  // namespace mnp
