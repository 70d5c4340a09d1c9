#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mnp {

/// Small dense vector used for workspace points and configurations; the
/// fixed upper bound keeps it on the stack.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 8, 1>;

struct Workspace {
  int dim = 2;
  Vec lo;
  Vec hi;

  bool contains(const Vec& p) const;  // closed box
};

struct BoxObstacle {
  Vec center;
  Vec half_extents;

  Vec lo() const { return center - half_extents; }
  Vec hi() const { return center + half_extents; }
  bool contains(const Vec& p) const;  // closed box
  /// Perimeter in 2D, surface area in 3D.
  double boundary_measure() const;
};

struct Scene {
  Workspace workspace;
  std::vector<BoxObstacle> obstacles;
  std::vector<Vec> cloud;
  std::uint64_t seed = 0;

  int dim() const { return workspace.dim; }
};

/// Procedural scene family parameters. Obstacles are axis-aligned cubes/squares.
struct SceneClassConfig {
  std::string name = "simple2d";
  int dim = 2;
  double extent = 20.0;  // workspace is [-extent, extent]^dim
  int obstacle_count = 7;
  double obstacle_side = 5.0;
  int cloud_points = 1400;
  int max_attempts = 1000;  // per obstacle
};

/// Defaults for "simple2d" and "complex3d"; throws for anything else.
SceneClassConfig scene_class_defaults(std::string_view class_id);

Scene generate_scene(const SceneClassConfig& cfg, std::uint64_t seed);
Scene generate_scene(std::string_view class_id, std::uint64_t seed);

/// n points on obstacle boundaries, obstacle chosen proportionally to its
/// boundary measure, then uniform on that boundary.
std::vector<Vec> sample_cloud(const Scene& scene, int n, std::uint64_t seed);

bool point_in_obstacle(const Vec& p, const Scene& scene);

/// Exact closed-segment test (slab method). Leaving the workspace counts as a hit.
bool segment_hits_obstacle(const Vec& a, const Vec& b, const Scene& scene);

/// Oriented rectangle vs. every obstacle (separating axis test), 2D only.
bool rect_hits_obstacle(const Vec& center, const Vec& half_extents, double angle, const Scene& scene);

/// Corners of an oriented rectangle, counter-clockwise.
std::vector<Vec> rect_corners(const Vec& center, const Vec& half_extents, double angle);

/// Fixed-order JSON text with 17 significant digits per float.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(std::string_view text);
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

/// "%.17g"; round-trips any finite double exactly.
std::string format_double(double v);

Vec make_vec(std::initializer_list<double> values);

}  // namespace mnp
