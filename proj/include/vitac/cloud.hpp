#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vitac {

/// Position in meters.
using Point = Eigen::Vector3d;

enum class Modality { visual, tactile };

const char* to_string(Modality m) noexcept;
Modality parse_modality(const std::string& text);

/// A labeled, modality-tagged set of 3D points. Point order is part of the
/// value: every operation in the library is deterministic in it.
struct PointCloud {
  std::vector<Point> points;
  Modality modality = Modality::visual;
  std::optional<std::string> label;
  std::optional<Point> sensor_origin;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  /// Same metadata, no points.
  PointCloud with_points(std::vector<Point> pts) const;
};

/// Parameters of the MLS + voxel-grid equalization. Meters throughout.
struct EqualizationParams {
  double upsample_step = 0.0003;
  double search_radius = 0.06;
  int poly_degree = 2;
  double voxel_edge = 0.005;

  void validate() const;
};

/// Local reference plane: right-handed orthonormal frame (tangent_u, tangent_v, normal).
struct LocalPlane {
  Point centroid = Point::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d tangent_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d tangent_v = Eigen::Vector3d::UnitY();

  /// (u, v, height) coordinates of a world point.
  Eigen::Vector3d to_local(const Point& p) const;
  Point to_world(double u, double v, double height) const;
};

/// Indices of points within `radius` (inclusive) of `center`, ascending.
std::vector<std::size_t> radius_neighbors(const PointCloud& cloud, const Point& center,
                                          double radius);

/// PCA plane through the points. The normal is the least-variance direction,
/// signed so that its largest-magnitude component is positive (ties prefer z,
/// then y). Throws DegenerateNeighborhood for < 3 points or rank < 2.
LocalPlane fit_local_plane(std::span<const Point> points);

/// Static 3-d tree over a copy of the points.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index;
    double squared_distance;
  };

  explicit KdTree(std::span<const Point> points);

  std::size_t size() const noexcept { return points_.size(); }

  /// Indices within `radius` of `center` (inclusive), ascending.
  std::vector<std::size_t> radius(const Point& center, double radius) const;
  void radius(const Point& center, double radius, std::vector<std::size_t>& out) const;

  /// The k nearest points ordered by (distance, index).
  std::vector<Neighbor> nearest(const Point& query, std::size_t k) const;

 private:
  struct Node {
    std::uint32_t begin;
    std::uint32_t end;
    std::int32_t left;
    std::int32_t right;
    int axis;
    double split;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::vector<Point> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Mean distance from each point to its nearest other point; 0 for < 2 points.
double mean_nearest_neighbor_spacing(std::span<const Point> points);

}  // namespace vitac
