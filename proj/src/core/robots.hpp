#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "rng.hpp"

namespace mnp {

using Configuration = Vec;

enum class RobotKind { point2d, rigid2d, nlink2d, point3d };

struct Path {
  std::vector<Configuration> waypoints;

  std::size_t size() const { return waypoints.size(); }
  bool empty() const { return waypoints.empty(); }
  const Configuration& front() const { return waypoints.front(); }
  const Configuration& back() const { return waypoints.back(); }
};

/// Immutable robot description: configuration bounds, geometry, and the
/// interpolation resolution used by steer_to.
class RobotModel {
 public:
  static constexpr double kDefaultSteerDelta = 0.01;

  static RobotModel point2d(const Workspace& ws, double steer_delta = kDefaultSteerDelta);
  static RobotModel point3d(const Workspace& ws, double steer_delta = kDefaultSteerDelta);
  /// Configuration (x, y, theta); theta in [-pi, pi].
  static RobotModel rigid2d(const Workspace& ws, const Vec& half_extents, double steer_delta = kDefaultSteerDelta);
  /// Configuration (x, y, q_1..q_k); q_1 is absolute, the rest are relative joint
  /// angles, each in [-0.75 pi, 0.75 pi].
  static RobotModel nlink2d(const Workspace& ws, std::vector<double> link_lengths,
                            double steer_delta = kDefaultSteerDelta);

  RobotKind kind() const { return kind_; }
  std::string name() const;
  int dof() const { return static_cast<int>(lower_.size()); }
  int workspace_dim() const { return kind_ == RobotKind::point3d ? 3 : 2; }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  double steer_delta() const { return steer_delta_; }
  const std::vector<double>& link_lengths() const { return links_; }
  const Vec& rect_half_extents() const { return rect_half_; }

  bool within_bounds(const Configuration& c) const;
  Configuration clamp(const Configuration& c) const;

  /// Joint positions p_0 (base) .. p_k for nlink2d.
  std::vector<Vec> link_points(const Configuration& c) const;

 private:
  RobotKind kind_ = RobotKind::point2d;
  Vec lower_, upper_;
  std::vector<double> links_;
  Vec rect_half_;
  double steer_delta_ = kDefaultSteerDelta;
};

/// Serializable robot description; build() binds it to a workspace.
/// kind is one of point2d, point3d, rigid2d, nlink2d.
struct RobotSpec {
  std::string kind = "point2d";
  std::vector<double> half_extents{1.0, 0.5};
  std::vector<double> link_lengths{3.0, 3.0};
  double steer_delta = RobotModel::kDefaultSteerDelta;

  RobotModel build(const Workspace& ws) const;
  nlohmann::json to_json() const;
  static RobotSpec from_json(const nlohmann::json& j);
  /// Accepts "point2d", "rigid2d", "point3d" and "nlink2d(k)".
  static RobotSpec parse(const std::string& text);
};

void check_dim(const RobotModel& model, const Configuration& c);

/// Collision check: true means c is in collision (or out of bounds).
bool phi(const RobotModel& model, const Configuration& c, const Scene& scene);

/// Straight-line feasibility via interpolation at resolution steer_delta
/// (normalized units), endpoints included.
bool steer_to(const RobotModel& model, const Configuration& a, const Configuration& b, const Scene& scene);

bool path_feasible(const RobotModel& model, const Path& path, const Scene& scene);

/// Euclidean distance in normalized coordinates.
double distance(const RobotModel& model, const Configuration& a, const Configuration& b);
double path_length(const RobotModel& model, const Path& path);

Vec normalize(const RobotModel& model, const Configuration& c);
Configuration denormalize(const RobotModel& model, const Vec& v);

Configuration sample_configuration(const RobotModel& model, Rng& rng);
/// Uniform sample rejected until phi is false; throws after max_attempts.
Configuration sample_free(const RobotModel& model, const Scene& scene, Rng& rng, int max_attempts = 100000);

}  // namespace mnp
