#include "geometry.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "error.hpp"
#include "io.hpp"
#include "rng.hpp"

namespace mnp {

Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool Workspace::contains(const Vec& p) const {
  for (int k = 0; k < dim; ++k)
    if (p[k] < lo[k] || p[k] > hi[k]) return false;
  return true;
}

bool BoxObstacle::contains(const Vec& p) const {
  for (Eigen::Index k = 0; k < center.size(); ++k)
    if (std::abs(p[k] - center[k]) > half_extents[k]) return false;
  return true;
}

double BoxObstacle::boundary_measure() const {
  const Vec e = 2.0 * half_extents;
  if (e.size() == 2) return 2.0 * (e[0] + e[1]);
  return 2.0 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2]);
}

SceneClassConfig scene_class_defaults(std::string_view class_id) {
  SceneClassConfig cfg;
  if (class_id == "simple2d") {
    cfg.name = "simple2d";
    cfg.dim = 2;
    cfg.obstacle_count = 7;
    cfg.cloud_points = 1400;
  } else if (class_id == "complex3d") {
    cfg.name = "complex3d";
    cfg.dim = 3;
    cfg.obstacle_count = 10;
    cfg.cloud_points = 1000;
  } else {
    fail(ErrorCode::invalid_argument, "unknown scene class '" + std::string(class_id) + "'");
  }
  return cfg;
}

Scene generate_scene(const SceneClassConfig& cfg, std::uint64_t seed) {
  if (cfg.dim != 2 && cfg.dim != 3) fail(ErrorCode::invalid_argument, "scene dimension must be 2 or 3");
  if (cfg.obstacle_count < 1) fail(ErrorCode::invalid_argument, "scene class needs at least one obstacle");
  if (cfg.cloud_points < 1) fail(ErrorCode::invalid_argument, "cloud size must be positive");
  const double h = 0.5 * cfg.obstacle_side;
  if (!(h > 0.0) || h >= cfg.extent) fail(ErrorCode::invalid_argument, "obstacle side does not fit the workspace");

  Scene scene;
  scene.seed = seed;
  scene.workspace.dim = cfg.dim;
  scene.workspace.lo = Vec::Constant(cfg.dim, -cfg.extent);
  scene.workspace.hi = Vec::Constant(cfg.dim, cfg.extent);

  Rng rng(derive_seed(seed, 0x5ce7e));
  for (int o = 0; o < cfg.obstacle_count; ++o) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      Vec c(cfg.dim);
      for (int k = 0; k < cfg.dim; ++k) c[k] = rng.uniform(-cfg.extent + h, cfg.extent - h);
      // Overlap is allowed; a center buried inside another box is a near-duplicate.
      const bool buried = std::any_of(scene.obstacles.begin(), scene.obstacles.end(),
                                      [&](const BoxObstacle& b) { return b.contains(c); });
      if (buried) continue;
      scene.obstacles.push_back({c, Vec::Constant(cfg.dim, h)});
      placed = true;
    }
    if (!placed)
      fail(ErrorCode::generation, "could not place obstacle " + std::to_string(o) + " after " +
                                      std::to_string(cfg.max_attempts) + " attempts (configuration too dense)");
  }
  scene.cloud = sample_cloud(scene, cfg.cloud_points, derive_seed(seed, 0xc10d));
  return scene;
}

Scene generate_scene(std::string_view class_id, std::uint64_t seed) {
  return generate_scene(scene_class_defaults(class_id), seed);
}

namespace {

Vec point_on_box_boundary(const BoxObstacle& box, Rng& rng) {
  const Eigen::Index m = box.center.size();
  const Vec lo = box.lo();
  const Vec e = 2.0 * box.half_extents;
  Vec p(m);
  if (m == 2) {
    double s = rng.uniform() * 2.0 * (e[0] + e[1]);
    if (s < e[0]) return make_vec({lo[0] + s, lo[1]});
    s -= e[0];
    if (s < e[1]) return make_vec({lo[0] + e[0], lo[1] + s});
    s -= e[1];
    if (s < e[0]) return make_vec({lo[0] + e[0] - s, lo[1] + e[1]});
    s -= e[0];
    return make_vec({lo[0], lo[1] + std::min(e[1] - s, e[1])});
  }
  // Face pairs normal to axis k have area a_k = product of the other two extents.
  const double a[3] = {e[1] * e[2], e[0] * e[2], e[0] * e[1]};
  double s = rng.uniform() * 2.0 * (a[0] + a[1] + a[2]);
  int axis = 0;
  bool upper = false;
  for (int k = 0; k < 3; ++k) {
    if (s < 2.0 * a[k] || k == 2) {
      axis = k;
      upper = s >= a[k];
      break;
    }
    s -= 2.0 * a[k];
  }
  for (int k = 0; k < 3; ++k) p[k] = k == axis ? lo[k] + (upper ? e[k] : 0.0) : lo[k] + rng.uniform() * e[k];
  return p;
}

}  // namespace

std::vector<Vec> sample_cloud(const Scene& scene, int n, std::uint64_t seed) {
  if (n < 1) fail(ErrorCode::invalid_argument, "cloud size must be positive");
  if (scene.obstacles.empty()) fail(ErrorCode::invalid_argument, "cannot sample a cloud without obstacles");
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& box : scene.obstacles) {
    total += box.boundary_measure();
    cumulative.push_back(total);
  }
  Rng rng(seed);
  std::vector<Vec> cloud;
  cloud.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
    cloud.push_back(point_on_box_boundary(scene.obstacles[idx], rng));
  }
  return cloud;
}

bool point_in_obstacle(const Vec& p, const Scene& scene) {
  if (!scene.workspace.contains(p)) return true;
  for (const auto& box : scene.obstacles)
    if (box.contains(p)) return true;
  return false;
}

namespace {

bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (a[k] < b[k]) return true;
    if (a[k] > b[k]) return false;
  }
  return false;
}

bool segment_hits_box(const Vec& a, const Vec& d, const BoxObstacle& box) {
  double t0 = 0.0, t1 = 1.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double lo = box.center[k] - box.half_extents[k];
    const double hi = box.center[k] + box.half_extents[k];
    if (d[k] == 0.0) {
      if (a[k] < lo || a[k] > hi) return false;
      continue;
    }
    double te = (lo - a[k]) / d[k];
    double tx = (hi - a[k]) / d[k];
    if (te > tx) std::swap(te, tx);
    t0 = std::max(t0, te);
    t1 = std::min(t1, tx);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

bool segment_hits_obstacle(const Vec& a_in, const Vec& b_in, const Scene& scene) {
  // Canonical endpoint order makes the floating-point result symmetric.
  const bool swap = lex_less(b_in, a_in);
  const Vec& a = swap ? b_in : a_in;
  const Vec& b = swap ? a_in : b_in;
  if (!scene.workspace.contains(a) || !scene.workspace.contains(b)) return true;
  const Vec d = b - a;
  for (const auto& box : scene.obstacles)
    if (segment_hits_box(a, d, box)) return true;
  return false;
}

std::vector<Vec> rect_corners(const Vec& center, const Vec& half, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<Vec> out;
  const double sx[4] = {-1, 1, 1, -1};
  const double sy[4] = {-1, -1, 1, 1};
  for (int i = 0; i < 4; ++i) {
    const double lx = sx[i] * half[0], ly = sy[i] * half[1];
    out.push_back(make_vec({center[0] + c * lx - s * ly, center[1] + s * lx + c * ly}));
  }
  return out;
}

bool rect_hits_obstacle(const Vec& center, const Vec& half, double angle, const Scene& scene) {
  if (scene.dim() != 2) fail(ErrorCode::dimension_mismatch, "rectangle test requires a 2D scene");
  for (const auto& corner : rect_corners(center, half, angle))
    if (!scene.workspace.contains(corner)) return true;
  const double c = std::cos(angle), s = std::sin(angle);
  const double ext_x = std::abs(c) * half[0] + std::abs(s) * half[1];
  const double ext_y = std::abs(s) * half[0] + std::abs(c) * half[1];
  for (const auto& box : scene.obstacles) {
    const double bx = box.half_extents[0], by = box.half_extents[1];
    const double dx = box.center[0] - center[0], dy = box.center[1] - center[1];
    // World axes.
    if (std::abs(dx) > ext_x + bx) continue;
    if (std::abs(dy) > ext_y + by) continue;
    // Rectangle axes u = (c, s), v = (-s, c).
    if (std::abs(dx * c + dy * s) > half[0] + bx * std::abs(c) + by * std::abs(s)) continue;
    if (std::abs(-dx * s + dy * c) > half[1] + bx * std::abs(s) + by * std::abs(c)) continue;
    return true;
  }
  return false;
}

namespace {

void append_vec(std::string& out, const Vec& v) {
  out += '[';
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) out += ", ";
    out += format_double(v[k]);
  }
  out += ']';
}

Vec vec_from_json(const nlohmann::json& j, int dim, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    fail(ErrorCode::format, std::string("scene field '") + what + "' must be an array of " + std::to_string(dim) + " numbers");
  Vec v(dim);
  for (int k = 0; k < dim; ++k) {
    if (!j[static_cast<std::size_t>(k)].is_number()) fail(ErrorCode::format, std::string("non-numeric entry in '") + what + "'");
    v[k] = j[static_cast<std::size_t>(k)].get<double>();
  }
  return v;
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  std::string out = "{\"version\": 1, \"dim\": " + std::to_string(scene.dim()) + ", \"lo\": ";
  append_vec(out, scene.workspace.lo);
  out += ", \"hi\": ";
  append_vec(out, scene.workspace.hi);
  out += ", \"seed\": " + std::to_string(scene.seed) + ",\n\"obstacles\": [";
  for (std::size_t i = 0; i < scene.obstacles.size(); ++i) {
    out += i ? ",\n  " : "\n  ";
    out += "{\"center\": ";
    append_vec(out, scene.obstacles[i].center);
    out += ", \"half_extents\": ";
    append_vec(out, scene.obstacles[i].half_extents);
    out += '}';
  }
  out += "],\n\"cloud\": [";
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    out += i ? ",\n  " : "\n  ";
    append_vec(out, scene.cloud[i]);
  }
  out += "]}\n";
  return out;
}

Scene scene_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("scene is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("version") || j["version"] != 1)
    fail(ErrorCode::version, "unsupported scene version");
  Scene scene;
  const int dim = j.value("dim", 0);
  if (dim != 2 && dim != 3) fail(ErrorCode::format, "scene dim must be 2 or 3");
  scene.workspace.dim = dim;
  scene.workspace.lo = vec_from_json(j["lo"], dim, "lo");
  scene.workspace.hi = vec_from_json(j["hi"], dim, "hi");
  for (int k = 0; k < dim; ++k)
    if (!(scene.workspace.lo[k] < scene.workspace.hi[k])) fail(ErrorCode::format, "workspace bounds must satisfy lo < hi");
  scene.seed = j.value("seed", std::uint64_t{0});
  for (const auto& o : j.at("obstacles")) {
    BoxObstacle box{vec_from_json(o.at("center"), dim, "center"), vec_from_json(o.at("half_extents"), dim, "half_extents")};
    if ((box.half_extents.array() <= 0.0).any()) fail(ErrorCode::format, "obstacle half extents must be positive");
    if (!scene.workspace.contains(box.lo()) || !scene.workspace.contains(box.hi()))
      fail(ErrorCode::format, "obstacle extends outside the workspace");
    scene.obstacles.push_back(std::move(box));
  }
  for (const auto& p : j.at("cloud")) scene.cloud.push_back(vec_from_json(p, dim, "cloud"));
  return scene;
}

void save_scene(const Scene& scene, const std::string& path) { write_file(path, scene_to_json(scene)); }

Scene load_scene(const std::string& path) { return scene_from_json(read_file(path)); }

}  // namespace mnp
