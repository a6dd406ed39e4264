#pragma once

#include "vitac/cloud.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace vitac {

enum class PrimitiveKind { rect, disc, annulus, capsule, ellipse };
enum class Profile { flat, dome };

/// A planar region extruded to a height. Shape parameters by kind:
///   rect    a, b = half extents along the local axes
///   disc    a = radius
///   annulus a = outer radius, b = inner radius
///   capsule a = half length of the core segment, b = radius
///   ellipse a, b = semi-axes
/// A dome falls from `height` at the center to 35% of it at the rim.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::rect;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double angle = 0.0;
  double a = 0.0;
  double b = 0.0;
  double height = 0.0;
  Profile profile = Profile::flat;

  bool contains(const Eigen::Vector2d& p) const;
  /// 0 outside.
  double height_at(const Eigen::Vector2d& p) const;
  double area() const;
  /// Bounding box corners (min, max).
  std::pair<Eigen::Vector2d, Eigen::Vector2d> bounds() const;

  struct Edge {
    Eigen::Vector2d point;
    Eigen::Vector2d normal;  // outward, unit
  };
  /// Boundary samples at arc-length positions (k + offset) * spacing.
  std::vector<Edge> boundary(double spacing, double offset) const;
};

/// Union of primitives resting on the table plane z = 0.
struct ObjectModel {
  int class_id = 0;
  std::string name;
  std::vector<Primitive> parts;

  bool contains(const Eigen::Vector2d& p) const;
  double height_at(double x, double y) const;
  std::pair<Eigen::Vector2d, Eigen::Vector2d> bounds() const;
  /// Silhouette area by midpoint integration on a square grid of `step`.
  double silhouette_area(double step = 2e-4) const;
};

int catalog_size() noexcept;
const std::string& catalog_name(int class_id);

/// Deterministic per (class_id, seed): isotropic in-plane scale jitter within
/// +-2.38% (silhouette areas of two instances stay within 10%), heights
/// within +-5%, random rotation about z and up to 1 cm of translation.
ObjectModel make_object(int class_id, std::uint64_t variation_seed);

/// Rigid planar motion applied on top of the object's own pose.
struct PlanarPose {
  double angle = 0.0;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
};
ObjectModel apply_pose(const ObjectModel& object, const PlanarPose& pose);

struct VisualSpec {
  double density = 1e5;        // points per square meter of surface
  double noise_sigma = 0.001;  // meters
  double sensor_height = 0.5;  // viewpoint above the bounding-box center, meters
};

/// Camera-like cloud seen from straight above: top surfaces on a jittered grid
/// plus the exposed part of every side wall, then isotropic Gaussian noise.
PointCloud sample_visual(const ObjectModel& object, const PlanarPose& pose, const VisualSpec& spec,
                         std::uint64_t seed);

struct SensorSpec {
  int modules_per_side = 6;
  double array_edge = 0.05;
  double force_threshold = 0.8;    // N
  double contact_stiffness = 500;  // N/m
  double press_depth = 0.004;      // m
  double noise_sigma = 0.0005;     // m
  double module_pitch() const noexcept { return array_edge / modules_per_side; }
  void validate() const;
};

struct ExplorationGrid {
  std::vector<Eigen::Vector2d> vertices;  // row-major: y outer, x inner
  double pitch = 0.025;
};

/// Vertices on the lattice pitch * Z^2 covering the object's bounding box.
ExplorationGrid make_grid(const ObjectModel& object, double pitch = 0.025);

struct ModuleReading {
  Point position;  // highest point under the module pad
  double force = 0.0;
  int row = 0;
  int col = 0;
};

/// One press at `vertex`: the array descends until its highest module
/// touches, then every module reports a linear-spring force.
std::vector<ModuleReading> press(const ObjectModel& object, const SensorSpec& sensor,
                                 const Eigen::Vector2d& vertex);

/// Union over all presses of readings with force >= threshold and positive
/// height, exact duplicates dropped, then Gaussian noise. Throws
/// EmptyContact when nothing qualifies.
PointCloud sample_tactile(const ObjectModel& object, const SensorSpec& sensor,
                          const ExplorationGrid& grid, std::uint64_t seed);

/// Removes the inliers (distance <= epsilon) of the plane with the largest
/// inlier count among `iterations` random three-point hypotheses.
PointCloud plane_removal(const PointCloud& cloud, double epsilon, std::uint64_t seed = 0,
                         int iterations = 200);

}  // namespace vitac
