#include "vitac/equalize.hpp"

#include "vitac/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace vitac {

VoxelAccumulator::VoxelAccumulator(double edge) : edge_(edge) {
  require(std::isfinite(edge) && edge > 0, ErrorCode::InvalidArgument, "voxel edge must be > 0");
}

VoxelKey VoxelAccumulator::key_of(const Point& p, double edge) {
  return {static_cast<std::int64_t>(std::floor(p.x() / edge)),
          static_cast<std::int64_t>(std::floor(p.y() / edge)),
          static_cast<std::int64_t>(std::floor(p.z() / edge))};
}

std::size_t VoxelAccumulator::KeyHash::operator()(const VoxelKey& k) const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (auto v : k) {
    h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

void VoxelAccumulator::add(const Point& p) {
  Cell& cell = cells_[key_of(p, edge_)];
  cell.sum += p;
  ++cell.count;
}

std::vector<Point> VoxelAccumulator::finish() const {
  std::vector<const std::pair<const VoxelKey, Cell>*> sorted;
  sorted.reserve(cells_.size());
  for (const auto& entry : cells_) sorted.push_back(&entry);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->first < b->first; });
  std::vector<Point> out;
  out.reserve(sorted.size());
  for (const auto* entry : sorted) {
    out.push_back(entry->second.sum / static_cast<double>(entry->second.count));
  }
  return out;
}

PointCloud voxel_filter(const PointCloud& cloud, double edge) {
  VoxelAccumulator acc(edge);
  for (const auto& p : cloud.points) acc.add(p);
  return cloud.with_points(acc.finish());
}

namespace {

int monomial_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

// Monomials s^a t^b ordered by total degree, then by increasing power of t.
void monomials(double s, double t, int degree, double* out) {
  const double ps[4] = {1.0, s, s * s, s * s * s};
  const double pt[4] = {1.0, t, t * t, t * t * t};
  int k = 0;
  for (int total = 0; total <= degree; ++total) {
    for (int j = 0; j <= total; ++j) out[k++] = ps[total - j] * pt[j];
  }
}

}  // namespace

void mls_resample(const PointCloud& cloud, const EqualizationParams& params,
                  const std::function<void(const Point&)>& sink) {
  params.validate();
  require(!cloud.empty(), ErrorCode::EmptyCloud, "mls_resample needs a non-empty cloud");

  const KdTree tree(cloud.points);
  const double step = params.upsample_step;
  const double radius = params.search_radius;
  // Each input point owns a footprint of the mean spacing; grid nodes farther
  // than footprint + 2 steps from every projected neighbor are pruned.
  const double footprint = mean_nearest_neighbor_spacing(cloud.points);
  const double keep_radius = footprint + 2.0 * step;
  const auto half_nodes = static_cast<long>(std::floor(footprint / step + 1e-9));

  std::vector<std::size_t> neighborhood;
  std::vector<Point> members;
  std::vector<Eigen::Vector2d> projected;
  std::vector<Eigen::Vector2d> nearby;
  double mono[10];

  for (const Point& query : cloud.points) {
    tree.radius(query, radius, neighborhood);
    if (neighborhood.size() < 3) {
      sink(query);
      continue;
    }
    members.clear();
    for (auto idx : neighborhood) members.push_back(cloud.points[idx]);

    LocalPlane plane;
    try {
      plane = fit_local_plane(members);
    } catch (const Error&) {
      sink(query);
      continue;
    }

    int degree = params.poly_degree;
    while (degree > 1 && static_cast<int>(members.size()) < monomial_count(degree)) --degree;
    const int terms = monomial_count(degree);

    Eigen::MatrixXd design(members.size(), terms);
    Eigen::VectorXd heights(members.size());
    projected.resize(members.size());
    Eigen::Vector2d lo(std::numeric_limits<double>::infinity(),
                       std::numeric_limits<double>::infinity());
    Eigen::Vector2d hi = -lo;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const Eigen::Vector3d local = plane.to_local(members[i]);
      projected[i] = local.head<2>();
      lo = lo.cwiseMin(projected[i]);
      hi = hi.cwiseMax(projected[i]);
      monomials(local.x() / radius, local.y() / radius, degree, mono);
      for (int k = 0; k < terms; ++k) design(i, k) = mono[k];
      heights[i] = local.z();
    }
    const Eigen::VectorXd coeffs = design.completeOrthogonalDecomposition().solve(heights);

    const Eigen::Vector2d center = plane.to_local(query).head<2>();
    const double reach = footprint + keep_radius + step;
    nearby.clear();
    for (const auto& q : projected) {
      if (std::abs(q.x() - center.x()) <= reach && std::abs(q.y() - center.y()) <= reach) {
        nearby.push_back(q);
      }
    }

    const double keep2 = keep_radius * keep_radius;
    for (long b = -half_nodes; b <= half_nodes; ++b) {
      const double v = center.y() + static_cast<double>(b) * step;
      if (v < lo.y() || v > hi.y()) continue;
      for (long a = -half_nodes; a <= half_nodes; ++a) {
        const double u = center.x() + static_cast<double>(a) * step;
        if (u < lo.x() || u > hi.x()) continue;
        const Eigen::Vector2d node(u, v);
        bool keep = false;
        for (const auto& q : nearby) {
          if ((q - node).squaredNorm() <= keep2) {
            keep = true;
            break;
          }
        }
        if (!keep) continue;
        monomials(u / radius, v / radius, degree, mono);
        double h = 0.0;
        for (int k = 0; k < terms; ++k) h += coeffs[k] * mono[k];
        const Point out = plane.to_world(u, v, h);
        if (out.allFinite()) sink(out);
      }
    }
  }
}

PointCloud mls_resample(const PointCloud& cloud, const EqualizationParams& params) {
  std::vector<Point> out;
  mls_resample(cloud, params, [&](const Point& p) { out.push_back(p); });
  return cloud.with_points(std::move(out));
}

PointCloud equalize(const PointCloud& cloud, const EqualizationParams& params) {
  params.validate();
  VoxelAccumulator acc(params.voxel_edge);
  mls_resample(cloud, params, [&](const Point& p) { acc.add(p); });
  return cloud.with_points(acc.finish());
}

}  // namespace vitac
