#include "vitac/cloud.hpp"

#include "vitac/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace vitac {

const char* to_string(Modality m) noexcept {
  return m == Modality::visual ? "visual" : "tactile";
}

Modality parse_modality(const std::string& text) {
  if (text == "visual") return Modality::visual;
  if (text == "tactile") return Modality::tactile;
  fail(ErrorCode::Parse, "unknown modality '" + text + "'");
}

PointCloud PointCloud::with_points(std::vector<Point> pts) const {
  PointCloud out;
  out.points = std::move(pts);
  out.modality = modality;
  out.label = label;
  out.sensor_origin = sensor_origin;
  return out;
}

void EqualizationParams::validate() const {
  require(std::isfinite(upsample_step) && upsample_step > 0, ErrorCode::InvalidArgument,
          "upsample_step must be > 0");
  require(std::isfinite(search_radius) && search_radius > 0, ErrorCode::InvalidArgument,
          "search_radius must be > 0");
  require(std::isfinite(voxel_edge) && voxel_edge > 0, ErrorCode::InvalidArgument,
          "voxel_edge must be > 0");
  require(poly_degree >= 1 && poly_degree <= 3, ErrorCode::InvalidArgument,
          "poly_degree must be in {1, 2, 3}");
}

Eigen::Vector3d LocalPlane::to_local(const Point& p) const {
  const Eigen::Vector3d d = p - centroid;
  return {d.dot(tangent_u), d.dot(tangent_v), d.dot(normal)};
}

Point LocalPlane::to_world(double u, double v, double height) const {
  return centroid + u * tangent_u + v * tangent_v + height * normal;
}

std::vector<std::size_t> radius_neighbors(const PointCloud& cloud, const Point& center,
                                          double radius) {
  require(radius >= 0, ErrorCode::InvalidArgument, "radius must be >= 0");
  const double r2 = radius * radius;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if ((cloud.points[i] - center).squaredNorm() <= r2) out.push_back(i);
  }
  return out;
}

namespace {

// Largest-magnitude component positive; exact ties resolved toward z, then y.
void canonical_sign(Eigen::Vector3d& v) {
  int best = 2;
  for (int k : {1, 0}) {
    if (std::abs(v[k]) > std::abs(v[best])) best = k;
  }
  if (v[best] < 0) v = -v;
}

}  // namespace

LocalPlane fit_local_plane(std::span<const Point> points) {
  if (points.size() < 3) {
    fail(ErrorCode::DegenerateNeighborhood, "plane fit needs at least 3 points");
  }
  Point centroid = Point::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - centroid;
    scatter.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  const Eigen::Vector3d& ev = eig.eigenvalues();  // ascending
  if (!(ev[2] > 0) || ev[1] <= 1e-12 * ev[2]) {
    fail(ErrorCode::DegenerateNeighborhood, "neighborhood is collinear or coincident");
  }

  LocalPlane plane;
  plane.centroid = centroid;
  plane.normal = eig.eigenvectors().col(0).normalized();
  canonical_sign(plane.normal);
  plane.tangent_u = eig.eigenvectors().col(2);
  plane.tangent_u -= plane.tangent_u.dot(plane.normal) * plane.normal;
  plane.tangent_u.normalize();
  canonical_sign(plane.tangent_u);
  plane.tangent_v = plane.normal.cross(plane.tangent_u).normalized();
  return plane;
}

// ---------------------------------------------------------------------------
// KdTree

namespace {
constexpr std::uint32_t kLeafSize = 12;
}

KdTree::KdTree(std::span<const Point> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, 0, 0.0});
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = points_[order_[begin]];
  Eigen::Vector3d hi = lo;
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::radius(const Point& center, double radius, std::vector<std::size_t>& out) const {
  out.clear();
  if (nodes_.empty()) return;
  const double r2 = radius * radius;
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        if ((points_[idx] - center).squaredNorm() <= r2) out.push_back(idx);
      }
      continue;
    }
    const double c = center[node.axis];
    if (c - radius <= node.split) stack.push_back(node.left);
    if (c + radius >= node.split) stack.push_back(node.right);
  }
  std::sort(out.begin(), out.end());
}

std::vector<std::size_t> KdTree::radius(const Point& center, double radius) const {
  std::vector<std::size_t> out;
  this->radius(center, radius, out);
  return out;
}

std::vector<KdTree::Neighbor> KdTree::nearest(const Point& query, std::size_t k) const {
  std::vector<Neighbor> result;
  if (k == 0 || nodes_.empty()) return result;
  k = std::min(k, points_.size());

  auto worse = [](const Neighbor& a, const Neighbor& b) {
    if (a.squared_distance != b.squared_distance) return a.squared_distance < b.squared_distance;
    return a.index < b.index;
  };
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> heap(worse);

  auto visit = [&](auto&& self, std::int32_t id) -> void {
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Neighbor cand{order_[i], (points_[order_[i]] - query).squaredNorm()};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (worse(cand, heap.top())) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const std::int32_t near = diff <= 0 ? node.left : node.right;
    const std::int32_t far = diff <= 0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().squared_distance) self(self, far);
  };
  visit(visit, 0);

  result.resize(heap.size());
  for (std::size_t i = result.size(); i-- > 0;) {
    result[i] = heap.top();
    heap.pop();
  }
  return result;
}

double mean_nearest_neighbor_spacing(std::span<const Point> points) {
  if (points.size() < 2) return 0.0;
  const KdTree tree(points);
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nn = tree.nearest(points[i], 2);
    // The query itself is one of the two hits unless it has exact duplicates.
    const auto& other = nn[0].index == i ? nn[1] : nn[0];
    total += std::sqrt(other.squared_distance);
  }
  return total / static_cast<double>(points.size());
}

}  // namespace vitac
