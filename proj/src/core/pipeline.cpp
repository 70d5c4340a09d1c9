#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "error.hpp"
#include "io.hpp"

namespace mnp {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

nlohmann::json budget_to_json(const PlannerBudget& b) {
  nlohmann::json j = {{"max_iterations", b.max_iterations},
                      {"max_time", b.max_time},
                      {"goal_bias", b.goal_bias},
                      {"eta", b.eta},
                      {"gamma", b.gamma}};
  j["stop_at_cost"] = b.stop_at_cost ? nlohmann::json(*b.stop_at_cost) : nlohmann::json(nullptr);
  return j;
}

PlannerBudget budget_from_json(const nlohmann::json& j, const PlannerBudget& base) {
  PlannerBudget b = base;
  if (!j.is_object()) fail(ErrorCode::config, "planner budget must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "max_iterations") b.max_iterations = value.get<int>();
    else if (key == "max_time") b.max_time = value.get<double>();
    else if (key == "goal_bias") b.goal_bias = value.get<double>();
    else if (key == "eta") b.eta = value.get<double>();
    else if (key == "gamma") b.gamma = value.get<double>();
    else if (key == "stop_at_cost") b.stop_at_cost = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
    else fail(ErrorCode::config, "unknown planner budget key '" + key + "'");
  }
  try {
    validate(b);
  } catch (const Error& e) {
    fail(ErrorCode::config, e.what());
  }
  return b;
}

RunConfig RunConfig::desk() { return {}; }

RunConfig RunConfig::paper_scale() {
  RunConfig c;
  c.seen = 900;
  c.unseen = 100;
  c.paths_per_scene = 400;
  c.cloud_points = scene_class_defaults(c.scene_class).cloud_points;
  c.arch = ArchitectureConfig::paper_scale();
  c.expert = PlannerBudget{20000, 60.0, 0.05, 0.1, 2.0, std::nullopt};
  return c;
}

void RunConfig::validate() const {
  if (scene_class != "simple2d" && scene_class != "complex3d")
    fail(ErrorCode::config, "scene_class must be simple2d or complex3d");
  if (seen < 1 || unseen < 0) fail(ErrorCode::config, "need at least one seen scene and a non-negative unseen count");
  if (cloud_points < 1) fail(ErrorCode::config, "cloud_points must be positive");
  if (paths_per_scene < 1) fail(ErrorCode::config, "paths_per_scene must be positive");
  if (workers < 1) fail(ErrorCode::config, "workers must be positive");
  const int ws_dim = scene_class == "complex3d" ? 3 : 2;
  const int robot_dim = robot.kind == "point3d" ? 3 : 2;
  if (ws_dim != robot_dim) fail(ErrorCode::config, "robot " + robot.kind + " does not fit scene class " + scene_class);
  if (bench.problems_per_env < 1) fail(ErrorCode::config, "bench.problems_per_env must be positive");
  if (bench.seen_envs < 0 || bench.unseen_envs < 0) fail(ErrorCode::config, "bench env counts must be non-negative");
  if (!(bench.target_factor >= 1.0)) fail(ErrorCode::config, "bench.target_factor must be at least 1");
  static const std::set<std::string> known{"mnp_origin", "mnp_rrt", "mse_nr", "mse_hr", "rrt_star", "irrt_star"};
  for (const auto& m : bench.methods)
    if (!known.count(m)) fail(ErrorCode::config, "unknown bench method '" + m + "'");
  arch.validate();
  training.validate();
  bp.validate();
}

nlohmann::json RunConfig::to_json() const {
  return {{"scene_class", scene_class},
          {"seen", seen},
          {"unseen", unseen},
          {"cloud_points", cloud_points},
          {"robot", robot.to_json()},
          {"paths_per_scene", paths_per_scene},
          {"expert", budget_to_json(expert)},
          {"expert_informed", expert_informed},
          {"include_reversed", include_reversed},
          {"keep_goal_targets", keep_goal_targets},
          {"network", arch.to_json()},
          {"training", training.to_json()},
          {"planner", bp.to_json()},
          {"replan", budget_to_json(replan)},
          {"strict_paper", strict_paper},
          {"bench",
           {{"problems_per_env", bench.problems_per_env},
            {"seen_envs", bench.seen_envs},
            {"unseen_envs", bench.unseen_envs},
            {"classical", budget_to_json(bench.classical)},
            {"target_factor", bench.target_factor},
            {"verify", budget_to_json(bench.verify)},
            {"methods", bench.methods}}},
          {"workers", workers},
          {"seed", seed},
          {"out_dir", out_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const RunConfig& base) {
  if (!j.is_object()) fail(ErrorCode::config, "run config must be a JSON object");
  RunConfig c = base;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "scene_class") c.scene_class = v.get<std::string>();
      else if (key == "seen") c.seen = v.get<int>();
      else if (key == "unseen") c.unseen = v.get<int>();
      else if (key == "cloud_points") c.cloud_points = v.get<int>();
      else if (key == "robot") c.robot = v.is_string() ? RobotSpec::parse(v.get<std::string>()) : RobotSpec::from_json(v);
      else if (key == "paths_per_scene") c.paths_per_scene = v.get<int>();
      else if (key == "expert") c.expert = budget_from_json(v, c.expert);
      else if (key == "expert_informed") c.expert_informed = v.get<bool>();
      else if (key == "include_reversed") c.include_reversed = v.get<bool>();
      else if (key == "keep_goal_targets") c.keep_goal_targets = v.get<bool>();
      else if (key == "network") {
        nlohmann::json merged = c.arch.to_json();
        merged.update(v);
        c.arch = ArchitectureConfig::from_json(merged);
      } else if (key == "training") {
        nlohmann::json merged = c.training.to_json();
        merged.update(v);
        c.training = TrainingConfig::from_json(merged);
      } else if (key == "planner") {
        nlohmann::json merged = c.bp.to_json();
        merged.update(v);
        c.bp = BiPlanConfig::from_json(merged);
      } else if (key == "replan") c.replan = budget_from_json(v, c.replan);
      else if (key == "strict_paper") c.strict_paper = v.get<bool>();
      else if (key == "bench") {
        if (!v.is_object()) fail(ErrorCode::config, "bench must be an object");
        for (const auto& [bk, bv] : v.items()) {
          if (bk == "problems_per_env") c.bench.problems_per_env = bv.get<int>();
          else if (bk == "seen_envs") c.bench.seen_envs = bv.get<int>();
          else if (bk == "unseen_envs") c.bench.unseen_envs = bv.get<int>();
          else if (bk == "classical") c.bench.classical = budget_from_json(bv, c.bench.classical);
          else if (bk == "target_factor") c.bench.target_factor = bv.get<double>();
          else if (bk == "verify") c.bench.verify = budget_from_json(bv, c.bench.verify);
          else if (bk == "methods") c.bench.methods = bv.get<std::vector<std::string>>();
          else fail(ErrorCode::config, "unknown bench key '" + bk + "'");
        }
      } else if (key == "workers") c.workers = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "out_dir") c.out_dir = v.get<std::string>();
      else fail(ErrorCode::config, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, path + ": " + e.what());
  } catch (const Error& e) {
    fail(ErrorCode::config, e.what());
  }
  return RunConfig::from_json(j, base);
}

std::string config_hash(const RunConfig& cfg) { return content_hash(cfg.to_json().dump()); }

// ------------------------------------------------------------------ layout

namespace {

std::string padded(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

std::string relative_to(const std::string& target, const std::string& base_dir) {
  return fs::path(target).lexically_relative(fs::path(base_dir)).generic_string();
}

nlohmann::json provenance(const RunConfig& cfg) {
  return {{"config", cfg.to_json()}, {"config_hash", config_hash(cfg)}};
}

void write_json(const std::string& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

constexpr std::uint64_t kSeenStream = 0x5ee0;
constexpr std::uint64_t kUnseenStream = 0x0a5e;
constexpr std::uint64_t kDataStream = 0xda7a;
constexpr std::uint64_t kBenchStream = 0xbe4c;

}  // namespace

std::string scene_path(const RunConfig& cfg, bool seen, int index) {
  return (fs::path(cfg.out_dir) / "scenes" / (seen ? "seen" : "unseen") / ("env_" + padded(index) + ".json"))
      .generic_string();
}

std::string dataset_path(const RunConfig& cfg) { return (fs::path(cfg.out_dir) / "data" / "train.tsv").generic_string(); }

std::string checkpoint_path(const RunConfig& cfg, ModelRole role) {
  return (fs::path(cfg.out_dir) / "models" / (std::string(to_string(role)) + ".ckpt")).generic_string();
}

// ------------------------------------------------------------------ stages

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(workers));
  for (std::size_t t = 0; t < count; ++t) {
    pool.emplace_back([&]() {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Scene make_env(const RunConfig& cfg, bool seen, int index) {
  SceneClassConfig sc = scene_class_defaults(cfg.scene_class);
  sc.cloud_points = cfg.cloud_points;
  return generate_scene(sc, derive_seed(cfg.seed, seen ? kSeenStream : kUnseenStream, static_cast<std::uint64_t>(index)));
}

EnvSet gen_envs(const RunConfig& cfg) {
  cfg.validate();
  EnvSet set;
  nlohmann::json files = nlohmann::json::array();
  for (int pass = 0; pass < 2; ++pass) {
    const bool seen = pass == 0;
    const int count = seen ? cfg.seen : cfg.unseen;
    auto& out = seen ? set.seen_files : set.unseen_files;
    for (int i = 0; i < count; ++i) {
      const std::string path = scene_path(cfg, seen, i);
      const std::string text = scene_to_json(make_env(cfg, seen, i));
      write_file(path, text);
      out.push_back(path);
      files.push_back({{"path", relative_to(path, cfg.out_dir)}, {"seen", seen}, {"hash", content_hash(text)}});
    }
  }
  auto manifest = provenance(cfg);
  manifest["files"] = files;
  write_json((fs::path(cfg.out_dir) / "scenes" / "manifest.json").string(), manifest);
  return set;
}

ProblemInstance sample_problem(const RobotModel& model, const Scene& scene, Rng& rng, int max_attempts) {
  for (int i = 0; i < max_attempts; ++i) {
    Configuration init = sample_free(model, scene, rng);
    Configuration goal = sample_free(model, scene, rng);
    if (!steer_to(model, init, goal, scene)) return {init, goal};
  }
  fail(ErrorCode::generation, "every sampled problem was straight-line solvable");
}

void append_path_samples(Dataset& data, std::size_t scene, const Path& path, bool include_reversed,
                         bool keep_goal_targets) {
  const auto add = [&](const std::vector<Configuration>& w) {
    const std::size_t steps = w.size() < 2 ? 0 : w.size() - 1;
    const std::size_t end = keep_goal_targets || steps == 0 ? steps : steps - 1;
    for (std::size_t i = 0; i < end; ++i) data.samples.push_back({scene, w[i], w.back(), w[i + 1]});
  };
  add(path.waypoints);
  if (include_reversed) add(std::vector<Configuration>(path.waypoints.rbegin(), path.waypoints.rend()));
}

namespace {

constexpr int kExpertAttempts = 50;

struct ExpertTask {
  std::optional<ExpertPath> result;
  int resampled = 0;
};

ExpertTask run_expert(const RunConfig& cfg, const RobotModel& model, const Scene& scene, std::size_t scene_index,
                      Rng& rng, const std::function<ProblemInstance(Rng&)>& problem_source) {
  ExpertTask task;
  for (int attempt = 0; attempt < kExpertAttempts; ++attempt) {
    const ProblemInstance prob = problem_source(rng);
    Rng planner_rng(rng.next_u64());
    const auto res = cfg.expert_informed ? informed_rrt_star(model, scene, prob.init, prob.goal, cfg.expert, planner_rng)
                                         : rrt_star(model, scene, prob.init, prob.goal, cfg.expert, planner_rng);
    if (!res.path) {
      ++task.resampled;
      continue;
    }
    Path simple = path_simplify(model, *res.path, scene);
    if (simple.size() < 3) {
      // Simplification found a straight line after all; treat as trivial.
      ++task.resampled;
      continue;
    }
    task.result = ExpertPath{scene_index, simple, path_length(model, simple)};
    return task;
  }
  fail(ErrorCode::generation, "expert failed on " + std::to_string(kExpertAttempts) + " consecutive problems");
}

}  // namespace

DataGenReport generate_expert_data(const RunConfig& cfg, const std::vector<Scene>& scenes,
                                   const std::vector<std::string>& scene_files, std::uint64_t stream) {
  DataGenReport rep;
  rep.data.scenes = scenes;
  rep.data.scene_files = scene_files;
  const std::size_t per = static_cast<std::size_t>(cfg.paths_per_scene);
  std::vector<ExpertTask> tasks(scenes.size() * per);
  std::vector<RobotModel> models;
  for (const auto& s : scenes) models.push_back(cfg.robot.build(s.workspace));
  parallel_for(tasks.size(), cfg.workers, [&](std::size_t t) {
    const std::size_t s = t / per;
    Rng rng(derive_seed(cfg.seed, stream, t));
    tasks[t] = run_expert(cfg, models[s], scenes[s], s, rng,
                          [&](Rng& r) { return sample_problem(models[s], scenes[s], r); });
  });
  for (auto& task : tasks) {
    rep.resampled += task.resampled;
    append_path_samples(rep.data, task.result->scene, task.result->path, cfg.include_reversed, cfg.keep_goal_targets);
    rep.expert.push_back(std::move(*task.result));
  }
  return rep;
}

DataGenReport gen_data(const RunConfig& cfg) {
  cfg.validate();
  std::vector<Scene> scenes;
  std::vector<std::string> files;
  const std::string data_file = dataset_path(cfg);
  const std::string data_dir = fs::path(data_file).parent_path().generic_string();
  std::string scene_digest;
  for (int i = 0; i < cfg.seen; ++i) {
    const std::string path = scene_path(cfg, true, i);
    const std::string text = read_file(path);
    scene_digest += content_hash(text);
    scenes.push_back(scene_from_json(text));
    files.push_back(relative_to(path, data_dir));
  }
  DataGenReport rep = generate_expert_data(cfg, scenes, files, kDataStream);
  rep.data.meta = provenance(cfg);
  rep.data.meta["scenes_hash"] = content_hash(scene_digest);
  rep.data.meta["expert_resampled"] = rep.resampled;
  rep.data.meta["paths"] = rep.expert.size();
  save_dataset(rep.data, data_file);
  std::string costs = "# scene_file\texpert_cost\twaypoints\n";
  for (const auto& e : rep.expert)
    costs += files[e.scene] + "\t" + format_double(e.cost) + "\t" + std::to_string(e.path.size()) + "\n";
  write_file((fs::path(data_dir) / "expert_costs.tsv").string(), costs);
  return rep;
}

TrainResult train_stage(const RunConfig& cfg, ModelRole role, const EpochLogger& log, const std::string& dataset_file,
                        const std::string& checkpoint_file) {
  cfg.validate();
  const std::string data_file = dataset_file.empty() ? dataset_path(cfg) : dataset_file;
  const std::string text = read_file(data_file);
  const Dataset data = dataset_from_text(text, fs::path(data_file).parent_path().string());
  const std::uint64_t seed = derive_seed(cfg.seed, role == ModelRole::mnp ? 0x3a9 : 0x35e);
  TrainResult res = role == ModelRole::mnp ? train_mnp(data, cfg.robot, cfg.arch, cfg.training, seed, log)
                                           : train_mse_baseline(data, cfg.robot, cfg.arch, cfg.training, seed, log);
  res.checkpoint.metadata["run"] = provenance(cfg);
  res.checkpoint.metadata["dataset_hash"] = content_hash(text);
  const std::string path = checkpoint_file.empty() ? checkpoint_path(cfg, role) : checkpoint_file;
  save_checkpoint(res.checkpoint, path);
  std::string trace = "# epoch\ttrain_loss\tvalidation_loss\n";
  for (std::size_t e = 0; e < res.report.train_loss.size(); ++e) {
    trace += std::to_string(e) + "\t" + format_double(res.report.train_loss[e]) + "\t";
    trace += e < res.report.validation_loss.size() ? format_double(res.report.validation_loss[e]) : std::string("nan");
    trace += "\n";
  }
  write_file(path + ".loss.tsv", trace);
  return res;
}

// ------------------------------------------------------------------ bench

std::vector<BenchProblem> make_bench_problems(const RunConfig& cfg, const RobotModel& model, const Scene& scene,
                                              int env_id, bool seen, int count) {
  std::vector<BenchProblem> out;
  Rng rng(derive_seed(cfg.seed, kBenchStream, static_cast<std::uint64_t>(env_id) * 2 + (seen ? 0 : 1)));
  int guard = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++guard > count * 50) fail(ErrorCode::generation, "could not find enough solvable problems");
    BenchProblem p;
    p.env_id = env_id;
    p.problem_id = static_cast<int>(out.size());
    p.seen = seen;
    p.instance = sample_problem(model, scene, rng);
    Rng verify_rng(rng.next_u64());
    if (!rrt(model, scene, p.instance.init, p.instance.goal, cfg.bench.verify, verify_rng).path) continue;
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::uint64_t method_stream(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
  return h;
}

}  // namespace

std::vector<BenchRecord> run_bench_problem(const RunConfig& cfg, const RobotModel& model, const Scene& scene,
                                           const BenchProblem& problem, const TrainedModel* mnp_model,
                                           const TrainedModel* mse_model, const std::vector<std::string>& methods) {
  const std::uint64_t key = static_cast<std::uint64_t>(problem.env_id) * 100000 +
                            static_cast<std::uint64_t>(problem.problem_id) * 2 + (problem.seen ? 0 : 1);
  auto record = [&](const std::string& method) {
    BenchRecord r;
    r.method = method;
    r.env_id = problem.env_id;
    r.problem_id = problem.problem_id;
    r.seen = problem.seen;
    return r;
  };
  auto neural = [&](const std::string& method, const TrainedModel* net, ReplanMode mode, bool fallback) {
    if (!net) fail(ErrorCode::invalid_argument, method + " needs a trained checkpoint");
    NeuralPlanConfig pc;
    pc.bp = cfg.bp;
    pc.replan = mode;
    pc.replan_budget = cfg.replan;
    pc.fallback = fallback;
    Rng rng(derive_seed(cfg.seed, method_stream(method), key));
    const auto out = neural_plan(model, scene, problem.instance.init, problem.instance.goal, *net, pc, rng);
    BenchRecord r = record(method);
    r.success = out.success();
    r.time = out.timings.total;
    if (r.success) r.length = path_length(model, *out.path);
    return r;
  };

  std::vector<BenchRecord> out;
  std::optional<double> target;
  auto wants = [&](const char* m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  // mnp_rrt first: it defines the target cost of the optimality baselines.
  if (wants("mnp_rrt")) {
    auto r = neural("mnp_rrt", mnp_model, ReplanMode::rrt, !cfg.strict_paper);
    if (r.success) target = cfg.bench.target_factor * r.length;
    out.push_back(r);
  }
  for (const auto& m : methods) {
    if (m == "mnp_rrt") continue;
    if (m == "mnp_origin") {
      out.push_back(neural(m, mnp_model, ReplanMode::none, false));
    } else if (m == "mse_nr") {
      out.push_back(neural(m, mse_model, ReplanMode::neural, false));
    } else if (m == "mse_hr") {
      out.push_back(neural(m, mse_model, ReplanMode::rrt, !cfg.strict_paper));
    } else if (m == "rrt_star" || m == "irrt_star") {
      PlannerBudget b = cfg.bench.classical;
      b.stop_at_cost = target;
      Rng rng(derive_seed(cfg.seed, method_stream(m), key));
      const auto res = m == "rrt_star"
                           ? rrt_star(model, scene, problem.instance.init, problem.instance.goal, b, rng)
                           : informed_rrt_star(model, scene, problem.instance.init, problem.instance.goal, b, rng);
      BenchRecord r = record(m);
      r.success = res.path.has_value() && (!target || res.best_cost <= *target);
      r.time = res.elapsed;
      if (r.success) r.length = path_length(model, *res.path);
      out.push_back(r);
    }
  }
  // Canonical order: the configured method order.
  std::vector<BenchRecord> ordered;
  for (const auto& m : methods)
    for (const auto& r : out)
      if (r.method == m) ordered.push_back(r);
  return ordered;
}

std::vector<BenchSummaryRow> summarize(const std::vector<BenchRecord>& records, const std::vector<std::string>& methods) {
  std::vector<BenchSummaryRow> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& m : methods) {
    for (bool seen : {true, false}) {
      BenchSummaryRow row;
      row.method = m;
      row.seen = seen;
      int succ = 0;
      double t_all = 0.0, t_succ = 0.0, len = 0.0;
      for (const auto& r : records) {
        if (r.method != m || r.seen != seen) continue;
        ++row.runs;
        t_all += r.time;
        if (r.success) {
          ++succ;
          t_succ += r.time;
          len += r.length;
        }
      }
      row.success_rate = row.runs ? static_cast<double>(succ) / row.runs : nan;
      row.mean_time_all = row.runs ? t_all / row.runs : nan;
      row.mean_time_success = succ ? t_succ / succ : nan;
      row.mean_length = succ ? len / succ : nan;
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string summary_text(const std::vector<BenchSummaryRow>& rows) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-12s %-7s %6s %9s %14s %14s %12s\n", "method", "set", "runs", "success",
                "time_all[s]", "time_succ[s]", "length");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %-7s %6d %9s %14s %14s %12s\n", r.method.c_str(),
                  r.seen ? "seen" : "unseen", r.runs, fixed(r.success_rate, 4).c_str(),
                  fixed(r.mean_time_all, 6).c_str(), fixed(r.mean_time_success, 6).c_str(),
                  fixed(r.mean_length, 4).c_str());
    out += line;
  }
  return out;
}

std::string summary_csv(const std::vector<BenchSummaryRow>& rows) {
  std::string out = "method,set,runs,success_rate,mean_time_all,mean_time_success,mean_length\n";
  for (const auto& r : rows)
    out += r.method + "," + (r.seen ? "seen" : "unseen") + "," + std::to_string(r.runs) + "," +
           format_double(r.success_rate) + "," + format_double(r.mean_time_all) + "," +
           format_double(r.mean_time_success) + "," + format_double(r.mean_length) + "\n";
  return out;
}

std::string records_csv(const std::vector<BenchRecord>& records) {
  std::string out = "method,env_id,problem_id,seen,success,time,length\n";
  for (const auto& r : records)
    out += r.method + "," + std::to_string(r.env_id) + "," + std::to_string(r.problem_id) + "," +
           (r.seen ? "1" : "0") + "," + (r.success ? "1" : "0") + "," + format_double(r.time) + "," +
           (r.success ? format_double(r.length) : std::string()) + "\n";
  return out;
}

BenchResult bench(const RunConfig& cfg, const TrainedModel* mnp_model, const TrainedModel* mse_model) {
  cfg.validate();
  struct Job {
    Scene scene;
    BenchProblem problem;
  };
  std::vector<Job> jobs;
  for (int pass = 0; pass < 2; ++pass) {
    const bool seen = pass == 0;
    const int total = seen ? cfg.seen : cfg.unseen;
    const int limit = seen ? cfg.bench.seen_envs : cfg.bench.unseen_envs;
    const int count = limit > 0 ? std::min(limit, total) : total;
    for (int e = 0; e < count; ++e) {
      const Scene scene = load_scene(scene_path(cfg, seen, e));
      const RobotModel model = cfg.robot.build(scene.workspace);
      for (auto& p : make_bench_problems(cfg, model, scene, e, seen, cfg.bench.problems_per_env))
        jobs.push_back({scene, std::move(p)});
    }
  }
  std::vector<std::vector<BenchRecord>> per_job(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const RobotModel model = cfg.robot.build(jobs[i].scene.workspace);
    per_job[i] = run_bench_problem(cfg, model, jobs[i].scene, jobs[i].problem, mnp_model, mse_model, cfg.bench.methods);
  });
  BenchResult res;
  for (auto& v : per_job) res.records.insert(res.records.end(), v.begin(), v.end());
  res.summary = summarize(res.records, cfg.bench.methods);

  const fs::path dir = fs::path(cfg.out_dir) / "bench";
  write_file((dir / "records.csv").string(), records_csv(res.records));
  write_file((dir / "summary.csv").string(), summary_csv(res.summary));
  write_file((dir / "summary.txt").string(), summary_text(res.summary));
  auto meta = provenance(cfg);
  if (mnp_model) meta["mnp_checkpoint_hash"] = content_hash(serialize_checkpoint(mnp_model->checkpoint()));
  if (mse_model) meta["mse_checkpoint_hash"] = content_hash(serialize_checkpoint(mse_model->checkpoint()));
  write_json((dir / "run.json").string(), meta);
  return res;
}

// ------------------------------------------------------------------ analysis

MultimodalReport multimodal_eval(const TrainedModel& mnp_model, const TrainedModel& mse_model, const RobotModel& robot,
                                 const Scene& scene, const Configuration& c_t, const Configuration& c_goal,
                                 int n_draws, std::uint64_t seed) {
  if (n_draws < 1) fail(ErrorCode::invalid_argument, "n_draws must be positive");
  if (mnp_model.role() != ModelRole::mnp || mse_model.role() != ModelRole::mse_baseline)
    fail(ErrorCode::invalid_argument, "multimodal_eval expects a mixture checkpoint and a baseline checkpoint");
  MultimodalReport rep;
  auto run = [&](const TrainedModel& m, std::uint64_t stream, std::vector<Configuration>& draws) {
    // An obstacle-free scene has no cloud to encode; a zero latent stands in.
    NextStepSampler sampler(m, robot, scene.cloud.empty() ? Eigen::VectorXd::Zero(m.latent()) : m.encode(scene));
    sampler.condition(c_t, c_goal);
    Rng rng(derive_seed(seed, stream));
    int hits = 0;
    for (int i = 0; i < n_draws; ++i) {
      draws.push_back(sampler.draw(rng));
      if (phi(robot, draws.back(), scene)) ++hits;
    }
    return static_cast<double>(hits) / n_draws;
  };
  rep.mnp_collision_rate = run(mnp_model, 1, rep.mnp_draws);
  rep.mse_collision_rate = run(mse_model, 2, rep.mse_draws);
  return rep;
}

Scene corridor_scene(int cloud_points, std::uint64_t seed) {
  Scene s;
  s.seed = seed;
  s.workspace.dim = 2;
  s.workspace.lo = make_vec({-20.0, -20.0});
  s.workspace.hi = make_vec({20.0, 20.0});
  s.obstacles.push_back({make_vec({0.0, 1.0}), make_vec({8.0, 1.0})});   // bar
  s.obstacles.push_back({make_vec({0.0, -2.0}), make_vec({2.0, 2.0})});  // block under its middle
  s.cloud = sample_cloud(s, cloud_points, derive_seed(seed, 0xc10d));
  return s;
}

ProblemInstance corridor_query() { return {make_vec({0.0, -12.0}), make_vec({0.0, 12.0})}; }

DataGenReport corridor_dataset(const RunConfig& cfg, int paths) {
  const Scene scene = corridor_scene(cfg.cloud_points, derive_seed(cfg.seed, 0xc0dd));
  const RobotModel model = RobotSpec{}.build(scene.workspace);
  DataGenReport rep;
  rep.data.scenes = {scene};
  rep.data.scene_files = {"corridor.json"};
  auto source = [&](Rng& r) {
    for (;;) {
      ProblemInstance p{make_vec({r.uniform(-4.0, 4.0), r.uniform(-16.0, -8.0)}),
                        make_vec({r.uniform(-4.0, 4.0), r.uniform(8.0, 16.0)})};
      if (!phi(model, p.init, scene) && !phi(model, p.goal, scene)) return p;
    }
  };
  std::vector<ExpertTask> tasks(static_cast<std::size_t>(paths));
  RunConfig point_cfg = cfg;
  point_cfg.robot = RobotSpec{};
  parallel_for(tasks.size(), cfg.workers, [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, 0xc0dd, t));
    tasks[t] = run_expert(point_cfg, model, scene, 0, rng, source);
  });
  for (auto& task : tasks) {
    rep.resampled += task.resampled;
    append_path_samples(rep.data, 0, task.result->path, cfg.include_reversed, cfg.keep_goal_targets);
    rep.expert.push_back(std::move(*task.result));
  }
  rep.data.meta = provenance(cfg);
  return rep;
}

// ------------------------------------------------------------------ SVG

std::string render_svg(const Scene& scene, const SvgContent& content) {
  constexpr double kSize = 600.0;
  const double sx = kSize / (scene.workspace.hi[0] - scene.workspace.lo[0]);
  const double sy = kSize / (scene.workspace.hi[1] - scene.workspace.lo[1]);
  auto X = [&](double x) { return fixed((x - scene.workspace.lo[0]) * sx, 3); };
  auto Y = [&](double y) { return fixed((scene.workspace.hi[1] - y) * sy, 3); };
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
  if (!content.title.empty()) out += "<title>" + content.title + "</title>\n";
  out += "<rect x=\"0\" y=\"0\" width=\"600\" height=\"600\" fill=\"#ffffff\" stroke=\"#000000\"/>\n";
  for (const auto& b : scene.obstacles) {
    const Vec lo = b.lo(), hi = b.hi();
    out += "<rect x=\"" + X(lo[0]) + "\" y=\"" + Y(hi[1]) + "\" width=\"" + fixed((hi[0] - lo[0]) * sx, 3) +
           "\" height=\"" + fixed((hi[1] - lo[1]) * sy, 3) + "\" fill=\"#7f7f7f\"/>\n";
  }
  for (const auto& p : scene.cloud)
    out += "<circle cx=\"" + X(p[0]) + "\" cy=\"" + Y(p[1]) + "\" r=\"1.2\" fill=\"#17becf\"/>\n";
  auto scatter = [&](const std::vector<Vec>& pts, const char* colour) {
    for (const auto& p : pts)
      out += "<circle cx=\"" + X(p[0]) + "\" cy=\"" + Y(p[1]) + "\" r=\"2\" fill=\"" + colour + "\" fill-opacity=\"0.6\"/>\n";
  };
  scatter(content.samples, "#d62728");
  scatter(content.alt_samples, "#2ca02c");
  for (std::size_t k = 0; k < content.paths.size(); ++k) {
    const auto& w = content.paths[k].waypoints;
    const char* colour = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
      out += "<line x1=\"" + X(w[i][0]) + "\" y1=\"" + Y(w[i][1]) + "\" x2=\"" + X(w[i + 1][0]) + "\" y2=\"" +
             Y(w[i + 1][1]) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    if (content.robot && content.robot->kind() != RobotKind::point2d && content.robot->kind() != RobotKind::point3d) {
      for (const auto& c : w) {
        std::vector<Vec> pts = content.robot->kind() == RobotKind::rigid2d
                                   ? rect_corners(make_vec({c[0], c[1]}), content.robot->rect_half_extents(), c[2])
                                   : content.robot->link_points(c);
        std::string attr;
        for (const auto& p : pts) attr += (attr.empty() ? "" : " ") + X(p[0]) + "," + Y(p[1]);
        const char* tag = content.robot->kind() == RobotKind::rigid2d ? "polygon" : "polyline";
        out += std::string("<") + tag + " points=\"" + attr + "\" fill=\"none\" stroke=\"" + colour +
               "\" stroke-opacity=\"0.5\"/>\n";
      }
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace mnp
