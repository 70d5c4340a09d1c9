#include "robots.hpp"

#include <cmath>
#include <numbers>

#include "error.hpp"

namespace mnp {

namespace {

constexpr double kJointLimit = 0.75 * std::numbers::pi;

bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (a[k] < b[k]) return true;
    if (a[k] > b[k]) return false;
  }
  return false;
}

}  // namespace

RobotModel RobotModel::point2d(const Workspace& ws, double steer_delta) {
  if (ws.dim != 2) fail(ErrorCode::dimension_mismatch, "point2d needs a 2D workspace");
  RobotModel m;
  m.kind_ = RobotKind::point2d;
  m.lower_ = ws.lo;
  m.upper_ = ws.hi;
  m.steer_delta_ = steer_delta;
  return m;
}

RobotModel RobotModel::point3d(const Workspace& ws, double steer_delta) {
  if (ws.dim != 3) fail(ErrorCode::dimension_mismatch, "point3d needs a 3D workspace");
  RobotModel m;
  m.kind_ = RobotKind::point3d;
  m.lower_ = ws.lo;
  m.upper_ = ws.hi;
  m.steer_delta_ = steer_delta;
  return m;
}

RobotModel RobotModel::rigid2d(const Workspace& ws, const Vec& half_extents, double steer_delta) {
  if (ws.dim != 2) fail(ErrorCode::dimension_mismatch, "rigid2d needs a 2D workspace");
  if (half_extents.size() != 2 || (half_extents.array() <= 0.0).any())
    fail(ErrorCode::invalid_argument, "rigid2d half extents must be two positive numbers");
  RobotModel m;
  m.kind_ = RobotKind::rigid2d;
  m.lower_ = make_vec({ws.lo[0], ws.lo[1], -std::numbers::pi});
  m.upper_ = make_vec({ws.hi[0], ws.hi[1], std::numbers::pi});
  m.rect_half_ = half_extents;
  m.steer_delta_ = steer_delta;
  return m;
}

RobotModel RobotModel::nlink2d(const Workspace& ws, std::vector<double> link_lengths, double steer_delta) {
  if (ws.dim != 2) fail(ErrorCode::dimension_mismatch, "nlink2d needs a 2D workspace");
  if (link_lengths.empty() || link_lengths.size() > 6)
    fail(ErrorCode::invalid_argument, "nlink2d supports 1 to 6 links");
  for (double l : link_lengths)
    if (!(l > 0.0)) fail(ErrorCode::invalid_argument, "link lengths must be positive");
  RobotModel m;
  m.kind_ = RobotKind::nlink2d;
  const auto d = static_cast<Eigen::Index>(2 + link_lengths.size());
  m.lower_ = Vec::Constant(d, -kJointLimit);
  m.upper_ = Vec::Constant(d, kJointLimit);
  m.lower_.head(2) = ws.lo;
  m.upper_.head(2) = ws.hi;
  m.links_ = std::move(link_lengths);
  m.steer_delta_ = steer_delta;
  return m;
}

std::string RobotModel::name() const {
  switch (kind_) {
    case RobotKind::point2d: return "point2d";
    case RobotKind::point3d: return "point3d";
    case RobotKind::rigid2d: return "rigid2d";
    case RobotKind::nlink2d: return "nlink2d(" + std::to_string(links_.size()) + ")";
  }
  return "unknown";
}

bool RobotModel::within_bounds(const Configuration& c) const {
  for (Eigen::Index k = 0; k < c.size(); ++k)
    if (!std::isfinite(c[k]) || c[k] < lower_[k] || c[k] > upper_[k]) return false;
  return true;
}

Configuration RobotModel::clamp(const Configuration& c) const {
  check_dim(*this, c);
  Configuration out = c;
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    if (std::isnan(out[k])) out[k] = 0.5 * (lower_[k] + upper_[k]);
    out[k] = std::min(std::max(out[k], lower_[k]), upper_[k]);
  }
  return out;
}

std::vector<Vec> RobotModel::link_points(const Configuration& c) const {
  std::vector<Vec> pts;
  Vec p = make_vec({c[0], c[1]});
  pts.push_back(p);
  double heading = 0.0;
  for (std::size_t j = 0; j < links_.size(); ++j) {
    heading += c[static_cast<Eigen::Index>(2 + j)];
    p[0] += links_[j] * std::cos(heading);
    p[1] += links_[j] * std::sin(heading);
    pts.push_back(p);
  }
  return pts;
}

RobotModel RobotSpec::build(const Workspace& ws) const {
  if (!(steer_delta > 0.0)) fail(ErrorCode::config, "steer_delta must be positive");
  if (kind == "point2d") return RobotModel::point2d(ws, steer_delta);
  if (kind == "point3d") return RobotModel::point3d(ws, steer_delta);
  if (kind == "rigid2d") {
    if (half_extents.size() != 2) fail(ErrorCode::config, "rigid2d needs two half extents");
    return RobotModel::rigid2d(ws, make_vec({half_extents[0], half_extents[1]}), steer_delta);
  }
  if (kind == "nlink2d") return RobotModel::nlink2d(ws, link_lengths, steer_delta);
  fail(ErrorCode::config, "unknown robot kind '" + kind + "'");
}

nlohmann::json RobotSpec::to_json() const {
  nlohmann::json j = {{"kind", kind}, {"steer_delta", steer_delta}};
  if (kind == "rigid2d") j["half_extents"] = half_extents;
  if (kind == "nlink2d") j["link_lengths"] = link_lengths;
  return j;
}

RobotSpec RobotSpec::from_json(const nlohmann::json& j) {
  RobotSpec s;
  try {
    s.kind = j.at("kind").get<std::string>();
    s.steer_delta = j.value("steer_delta", s.steer_delta);
    if (j.contains("half_extents")) s.half_extents = j["half_extents"].get<std::vector<double>>();
    if (j.contains("link_lengths")) s.link_lengths = j["link_lengths"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("bad robot description: ") + e.what());
  }
  if (s.kind != "point2d" && s.kind != "point3d" && s.kind != "rigid2d" && s.kind != "nlink2d")
    fail(ErrorCode::config, "unknown robot kind '" + s.kind + "'");
  return s;
}

RobotSpec RobotSpec::parse(const std::string& text) {
  RobotSpec s;
  if (text.rfind("nlink2d", 0) == 0) {
    s.kind = "nlink2d";
    int links = 2;
    if (text.size() > 7) {
      if (text.size() < 10 || text[7] != '(' || text.back() != ')')
        fail(ErrorCode::config, "expected nlink2d(k), got '" + text + "'");
      try {
        links = std::stoi(text.substr(8, text.size() - 9));
      } catch (const std::exception&) {
        fail(ErrorCode::config, "expected nlink2d(k), got '" + text + "'");
      }
    }
    if (links < 1 || links > 6) fail(ErrorCode::config, "nlink2d supports 1 to 6 links");
    s.link_lengths.assign(static_cast<std::size_t>(links), 3.0);
    return s;
  }
  s.kind = text;
  if (s.kind != "point2d" && s.kind != "point3d" && s.kind != "rigid2d")
    fail(ErrorCode::config, "unknown robot kind '" + text + "'");
  return s;
}

void check_dim(const RobotModel& model, const Configuration& c) {
  if (c.size() != model.dof())
    fail(ErrorCode::dimension_mismatch, model.name() + " expects " + std::to_string(model.dof()) +
                                            " coordinates, got " + std::to_string(c.size()));
}

bool phi(const RobotModel& model, const Configuration& c, const Scene& scene) {
  check_dim(model, c);
  if (!model.within_bounds(c)) return true;
  switch (model.kind()) {
    case RobotKind::point2d:
    case RobotKind::point3d:
      return point_in_obstacle(c, scene);
    case RobotKind::rigid2d:
      return rect_hits_obstacle(make_vec({c[0], c[1]}), model.rect_half_extents(), c[2], scene);
    case RobotKind::nlink2d: {
      const auto pts = model.link_points(c);
      for (std::size_t j = 1; j < pts.size(); ++j)
        if (segment_hits_obstacle(pts[j - 1], pts[j], scene)) return true;
      return false;
    }
  }
  return true;
}

double distance(const RobotModel& model, const Configuration& a, const Configuration& b) {
  check_dim(model, a);
  check_dim(model, b);
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double d = 2.0 * (a[k] - b[k]) / (model.upper()[k] - model.lower()[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

bool steer_to(const RobotModel& model, const Configuration& a_in, const Configuration& b_in, const Scene& scene) {
  const bool swap = lex_less(b_in, a_in);
  const Configuration& a = swap ? b_in : a_in;
  const Configuration& b = swap ? a_in : b_in;
  if (phi(model, a, scene) || phi(model, b, scene)) return false;
  const double d = distance(model, a, b);
  const auto steps = static_cast<long>(std::ceil(d / model.steer_delta()));
  if (steps <= 1) return true;
  const Vec delta = b - a;
  for (long i = 1; i < steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps);
    if (phi(model, a + t * delta, scene)) return false;
  }
  return true;
}

bool path_feasible(const RobotModel& model, const Path& path, const Scene& scene) {
  if (path.empty()) return false;
  if (phi(model, path.front(), scene)) return false;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!steer_to(model, path.waypoints[i - 1], path.waypoints[i], scene)) return false;
  return true;
}

double path_length(const RobotModel& model, const Path& path) {
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) total += distance(model, path.waypoints[i - 1], path.waypoints[i]);
  return total;
}

Vec normalize(const RobotModel& model, const Configuration& c) {
  check_dim(model, c);
  return (2.0 * (c - model.lower()).array() / (model.upper() - model.lower()).array() - 1.0).matrix();
}

Configuration denormalize(const RobotModel& model, const Vec& v) {
  check_dim(model, v);
  return (model.lower().array() + 0.5 * (v.array() + 1.0) * (model.upper() - model.lower()).array()).matrix();
}

Configuration sample_configuration(const RobotModel& model, Rng& rng) {
  Configuration c(model.dof());
  for (int k = 0; k < model.dof(); ++k) c[k] = rng.uniform(model.lower()[k], model.upper()[k]);
  return c;
}

Configuration sample_free(const RobotModel& model, const Scene& scene, Rng& rng, int max_attempts) {
  for (int i = 0; i < max_attempts; ++i) {
    Configuration c = sample_configuration(model, rng);
    if (!phi(model, c, scene)) return c;
  }
  fail(ErrorCode::generation, "no collision-free configuration found for " + model.name());
}

}  // namespace mnp
