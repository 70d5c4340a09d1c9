#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "classical.hpp"
#include "error.hpp"

using namespace mnp;

namespace {

Scene empty_scene() {
  Scene s;
  s.workspace.dim = 2;
  s.workspace.lo = make_vec({-20, -20});
  s.workspace.hi = make_vec({20, 20});
  return s;
}

Scene centered_box() {
  Scene s = empty_scene();
  s.obstacles.push_back({make_vec({0, 0}), make_vec({3, 3})});
  return s;
}

// Recomputes every cost from the parent chain, independent of Tree's bookkeeping.
bool costs_match_chain(const RobotModel& m, const Tree& t) {
  if (t.parent(0) != 0 || t.cost(0) != 0.0) return false;
  for (std::size_t i = 1; i < t.size(); ++i) {
    double c = 0.0;
    std::size_t j = i, steps = 0;
    while (j != 0) {
      const std::size_t p = t.parent(j);
      c += distance(m, t.node(p), t.node(j));
      j = p;
      if (++steps > t.size()) return false;  // cycle
    }
    if (std::abs(c - t.cost(i)) > 1e-9) return false;
  }
  return true;
}

PlannerBudget iters(int n) {
  PlannerBudget b;
  b.max_iterations = n;
  b.max_time = 0.0;
  return b;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(Classical, BudgetValidation) {
  PlannerBudget b;
  EXPECT_NO_THROW(validate(b));
  b.goal_bias = 1.0;
  EXPECT_THROW(validate(b), Error);
  b = PlannerBudget{};
  b.eta = 0.0;
  EXPECT_THROW(validate(b), Error);
  b = PlannerBudget{};
  b.max_iterations = 0;
  EXPECT_THROW(validate(b), Error);
}

TEST(Classical, TreeBookkeeping) {
  const auto m = RobotModel::point2d(empty_scene().workspace);
  Tree t(m);
  t.add_root(make_vec({0, 0}));
  const auto a = t.add(make_vec({4, 0}), 0);
  const auto b = t.add(make_vec({4, 4}), a);
  const auto c = t.add(make_vec({4, 8}), b);
  EXPECT_TRUE(t.check_invariants());
  EXPECT_NEAR(t.cost(c), 12.0 / 20.0, 1e-12);
  t.set_parent(b, 0);  // subtree cost propagates to c
  EXPECT_NEAR(t.cost(c), (std::sqrt(32.0) + 4.0) / 20.0, 1e-12);
  EXPECT_TRUE(costs_match_chain(m, t));
  EXPECT_EQ(t.nearest(make_vec({3.9, 0.1})), a);
  Tree tie(m);
  tie.add_root(make_vec({0, 0}));
  tie.add(make_vec({10, 0}), 0);
  EXPECT_EQ(tie.nearest(make_vec({5, 0})), 0u);  // equidistant: lowest index wins
  EXPECT_EQ(t.path_to(c).size(), 3u);
  EXPECT_THROW(t.add_root(make_vec({1, 1})), Error);
}

TEST(Classical, TreeInvariantHoldsThroughRewiring) {
  const Scene s = generate_scene("simple2d", 21);
  const auto m = RobotModel::point2d(s.workspace);
  Rng pick(1);
  const auto init = sample_free(m, s, pick), goal = sample_free(m, s, pick);
  int checks = 0;
  PlannerObserver obs;
  obs.on_tree_change = [&](const Tree& t) {
    if (t.size() % 25 == 0) {
      ++checks;
      EXPECT_TRUE(costs_match_chain(m, t));
    }
  };
  Rng rng(2);
  rrt_star(m, s, init, goal, iters(1500), rng, &obs);
  EXPECT_GT(checks, 10);
}

TEST(Classical, RrtEmptyAndObstructed) {
  const Scene e = empty_scene();
  const auto m = RobotModel::point2d(e.workspace);
  Rng rng(1);
  const auto r = rrt(m, e, make_vec({-15, -15}), make_vec({15, 15}), PlannerBudget{}, rng);
  ASSERT_TRUE(r.success());
  EXPECT_EQ(r.path->size(), 2u);

  const Scene s = centered_box();
  EXPECT_THROW(rrt(m, s, make_vec({-15, 0}), make_vec({0, 0}), PlannerBudget{}, rng), Error);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r2(seed);
    const auto res = rrt(m, s, make_vec({-10, 0}), make_vec({10, 0}), PlannerBudget{}, r2);
    ASSERT_TRUE(res.success());
    EXPECT_TRUE(path_feasible(m, *res.path, s));
    EXPECT_EQ(res.path->front(), make_vec({-10, 0}));
    EXPECT_EQ(res.path->back(), make_vec({10, 0}));
  }
}

TEST(Classical, RrtFailsGracefullyWhenSealed) {
  Scene s = empty_scene();
  // Goal enclosed by four walls.
  s.obstacles.push_back({make_vec({10, 14}), make_vec({5, 1})});
  s.obstacles.push_back({make_vec({10, 6}), make_vec({5, 1})});
  s.obstacles.push_back({make_vec({6, 10}), make_vec({1, 5})});
  s.obstacles.push_back({make_vec({14, 10}), make_vec({1, 5})});
  const auto m = RobotModel::point2d(s.workspace);
  Rng rng(3);
  const auto r = rrt(m, s, make_vec({-10, -10}), make_vec({10, 10}), iters(2000), rng);
  EXPECT_FALSE(r.success());
  EXPECT_EQ(r.iterations, 2000);
  EXPECT_TRUE(std::isinf(r.best_cost));
}

TEST(Classical, PlannersAreDeterministic) {
  const Scene s = generate_scene("simple2d", 5);
  const auto m = RobotModel::point2d(s.workspace);
  Rng pick(9);
  const auto a = sample_free(m, s, pick), b = sample_free(m, s, pick);
  for (int which = 0; which < 3; ++which) {
    auto run = [&] {
      Rng rng(77);
      return which == 0   ? rrt(m, s, a, b, iters(3000), rng)
             : which == 1 ? rrt_star(m, s, a, b, iters(1500), rng)
                          : informed_rrt_star(m, s, a, b, iters(1500), rng);
    };
    const auto x = run(), y = run();
    ASSERT_EQ(x.success(), y.success());
    if (!x.success()) continue;
    ASSERT_EQ(x.path->size(), y.path->size());
    for (std::size_t i = 0; i < x.path->size(); ++i) EXPECT_EQ(x.path->waypoints[i], y.path->waypoints[i]);
  }
}

TEST(Classical, RrtStarApproachesStraightLine) {
  const Scene e = empty_scene();
  const auto m = RobotModel::point2d(e.workspace);
  // Straight line (-15,0)-(15,0) is 30 workspace units, 1.5 normalized.
  std::vector<double> lengths;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto r = rrt_star(m, e, make_vec({-15, 0}), make_vec({15, 0}), iters(5000), rng);
    ASSERT_TRUE(r.success());
    lengths.push_back(path_length(m, *r.path));
  }
  EXPECT_LE(median(lengths), 1.05 * 1.5);
}

TEST(Classical, RrtStarCostIsAnytime) {
  const Scene s = centered_box();
  const auto m = RobotModel::point2d(s.workspace);
  const auto a = make_vec({-12, 1}), b = make_vec({12, -1});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng r1(seed), r2(seed);
    const auto short_run = rrt_star(m, s, a, b, iters(1000), r1);
    const auto long_run = rrt_star(m, s, a, b, iters(5000), r2);
    ASSERT_TRUE(long_run.success());
    for (std::size_t i = 1; i < long_run.cost_trace.size(); ++i)
      EXPECT_LE(long_run.cost_trace[i].second, long_run.cost_trace[i - 1].second);
    EXPECT_NEAR(long_run.best_cost, path_length(m, *long_run.path), 1e-9);
    EXPECT_GE(long_run.best_cost, distance(m, a, b));
    if (short_run.success()) EXPECT_LE(long_run.best_cost, short_run.best_cost);
    EXPECT_TRUE(path_feasible(m, *long_run.path, s));
  }
}

TEST(Classical, StopAtCost) {
  const Scene e = empty_scene();
  const auto m = RobotModel::point2d(e.workspace);
  PlannerBudget b = iters(20000);
  b.stop_at_cost = 1.6;
  Rng rng(4);
  const auto r = informed_rrt_star(m, e, make_vec({-15, 0}), make_vec({15, 0}), b, rng);
  ASSERT_TRUE(r.success());
  EXPECT_LE(r.best_cost, 1.6);
  EXPECT_LT(r.iterations, 20000);
}

TEST(Classical, InformedSamplerStaysInSpheroid) {
  const Vec a = make_vec({-0.5, 0.1, 0.3}), b = make_vec({0.4, -0.2, 0.0});
  const InformedSampler sampler(a, b);
  Rng rng(12);
  const double c_best = 1.4 * sampler.c_min();
  Vec mean = Vec::Zero(3);
  for (int i = 0; i < 10000; ++i) {
    const Vec x = sampler.sample(c_best, rng);
    EXPECT_LE((x - a).norm() + (x - b).norm(), c_best + 1e-12);
    mean += x;
  }
  EXPECT_LT((mean / 10000 - (a + b) / 2).norm(), 0.02);

  const InformedSampler flat(make_vec({-0.5, 0}), make_vec({0.5, 0}));
  for (int i = 0; i < 1000; ++i) {
    const Vec x = flat.sample(flat.c_min(), rng);
    EXPECT_NEAR(x[1], 0.0, 1e-9);
    EXPECT_LE(std::abs(x[0]), 0.5 + 1e-9);
  }
}

TEST(Classical, InformedPostSolutionSamplesInsideSet) {
  const Scene s = centered_box();
  const auto m = RobotModel::point2d(s.workspace);
  const auto a = make_vec({-12, 1}), b = make_vec({12, -1});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    int informed = 0, outside = 0;
    PlannerObserver obs;
    obs.on_sample = [&](const Configuration& q, bool is_informed, double c_best) {
      if (!is_informed) return;
      ++informed;
      if (!in_informed_set(m, a, b, q, c_best)) ++outside;
    };
    Rng rng(seed);
    informed_rrt_star(m, s, a, b, iters(3000), rng, &obs);
    EXPECT_GT(informed, 100);
    EXPECT_EQ(outside, 0);
  }
}

TEST(Classical, InformedConvergesFasterThanRrtStar) {
  const Scene e = empty_scene();
  const auto m = RobotModel::point2d(e.workspace);
  const auto a = make_vec({-15, 0}), b = make_vec({15, 0});
  PlannerBudget budget = iters(20000);
  budget.stop_at_cost = 1.02 * 1.5;
  std::vector<double> plain, informed;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r1(seed), r2(seed);
    plain.push_back(rrt_star(m, e, a, b, budget, r1).iterations);
    informed.push_back(informed_rrt_star(m, e, a, b, budget, r2).iterations);
  }
  EXPECT_LT(median(informed), median(plain));
}

TEST(Classical, PathSimplifyExamples) {
  const Scene e = empty_scene();
  const auto m = RobotModel::point2d(e.workspace);
  const Path line{{make_vec({0, 0}), make_vec({1, 0}), make_vec({2, 0})}};
  const Path out = path_simplify(m, line, e);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.back(), make_vec({2, 0}));
  const Path two{{make_vec({0, 0}), make_vec({5, 5})}};
  EXPECT_EQ(path_simplify(m, two, e).waypoints, two.waypoints);
  // Colliding waypoints are dropped before the scan.
  const Scene s = centered_box();
  const Path through{{make_vec({-10, 5}), make_vec({0, 0}), make_vec({10, 5})}};
  const Path fixed = path_simplify(m, through, s);
  EXPECT_EQ(fixed.size(), 2u);
  EXPECT_TRUE(path_feasible(m, fixed, s));
}

TEST(Classical, PathSimplifyOnExpertPaths) {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 100; ++seed) {
    const Scene s = generate_scene("simple2d", 500 + seed);
    const auto m = RobotModel::point2d(s.workspace);
    Rng rng(seed);
    const auto a = sample_free(m, s, rng), b = sample_free(m, s, rng);
    const auto r = rrt(m, s, a, b, iters(5000), rng);
    if (!r.success()) continue;
    ++checked;
    ASSERT_TRUE(path_feasible(m, *r.path, s));
    const Path out = path_simplify(m, *r.path, s);
    EXPECT_TRUE(path_feasible(m, out, s));
    EXPECT_LE(out.size(), r.path->size());
    EXPECT_LE(path_length(m, out), path_length(m, *r.path) + 1e-12);
    EXPECT_EQ(out.front(), a);
    EXPECT_EQ(out.back(), b);
  }
}

TEST(Classical, OtherRobotKinds) {
  const Scene s = generate_scene("simple2d", 33);
  const auto arm = RobotModel::nlink2d(s.workspace, {3.0, 3.0});
  const auto rect = RobotModel::rigid2d(s.workspace, make_vec({1.0, 0.5}));
  for (const auto* m : {&arm, &rect}) {
    Rng rng(5);
    auto a = sample_free(*m, s, rng), b = sample_free(*m, s, rng);
    while (steer_to(*m, a, b, s)) b = sample_free(*m, s, rng);
    const auto r = rrt(*m, s, a, b, iters(20000), rng);
    ASSERT_TRUE(r.success());
    EXPECT_TRUE(path_feasible(*m, *r.path, s));
  }
}
