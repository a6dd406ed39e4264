#pragma once

#include "vitac/cloud.hpp"

#include <array>
#include <unordered_map>

namespace vitac {

/// Integer voxel coordinates, floor(coordinate / edge) per axis, anchored at
/// the world origin.
using VoxelKey = std::array<std::int64_t, 3>;

/// Accumulates points into voxel sums in insertion order; `finish` yields one
/// centroid per occupied voxel sorted lexicographically by key.
class VoxelAccumulator {
 public:
  explicit VoxelAccumulator(double edge);

  void add(const Point& p);
  std::size_t occupied() const noexcept { return cells_.size(); }
  std::vector<Point> finish() const;

  static VoxelKey key_of(const Point& p, double edge);

 private:
  struct KeyHash {
    std::size_t operator()(const VoxelKey& k) const noexcept;
  };
  struct Cell {
    Point sum = Point::Zero();
    std::size_t count = 0;
  };

  double edge_;
  std::unordered_map<VoxelKey, Cell, KeyHash> cells_;
};

/// Moving-least-squares resampling. For each query point: PCA plane over its
/// search-radius neighborhood, least-squares height polynomial of total degree
/// poly_degree in plane coordinates, then a square grid of step upsample_step
/// around the query's projection, lifted onto the polynomial. Queries whose
/// neighborhood is degenerate are passed through unchanged.
PointCloud mls_resample(const PointCloud& cloud, const EqualizationParams& params);

/// Streaming form of mls_resample; `sink` sees exactly the points
/// mls_resample would return, in the same order.
void mls_resample(const PointCloud& cloud, const EqualizationParams& params,
                  const std::function<void(const Point&)>& sink);

PointCloud voxel_filter(const PointCloud& cloud, double edge);

/// voxel_filter(mls_resample(cloud, params), params.voxel_edge) without
/// materializing the dense intermediate cloud; bit-identical to the composition.
PointCloud equalize(const PointCloud& cloud, const EqualizationParams& params);

}  // namespace vitac
