#include "vitac/descriptors.hpp"

#include "vitac/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace vitac {

int descriptor_length(DescriptorKind kind) noexcept {
  switch (kind) {
    case DescriptorKind::esf: return kEsfLength;
    case DescriptorKind::shot: return kShotLength;
    case DescriptorKind::concat: return kConcatLength;
    case DescriptorKind::clue: return kClueLength;
  }
  return 0;
}

const char* to_string(DescriptorKind kind) noexcept {
  switch (kind) {
    case DescriptorKind::esf: return "ESF";
    case DescriptorKind::shot: return "SHOT";
    case DescriptorKind::concat: return "CONCAT";
    case DescriptorKind::clue: return "CLUE";
  }
  return "?";
}

DescriptorKind parse_descriptor_kind(const std::string& text) {
  std::string up = text;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "ESF") return DescriptorKind::esf;
  if (up == "SHOT") return DescriptorKind::shot;
  if (up == "CONCAT" || up == "DC") return DescriptorKind::concat;
  if (up == "CLUE") return DescriptorKind::clue;
  fail(ErrorCode::Parse, "unknown descriptor kind '" + text + "'");
}

// ---------------------------------------------------------------------------
// Normals

NormalField estimate_normals(const PointCloud& cloud, int k) {
  if (k < 3) fail(ErrorCode::TooFewPoints, "normal estimation needs k >= 3");
  if (cloud.size() < static_cast<std::size_t>(k) + 1) {
    fail(ErrorCode::TooFewPoints, "normal estimation needs at least k + 1 points");
  }
  const KdTree tree(cloud.points);
  NormalField field;
  field.normals.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud.points[i];
    const auto nn = tree.nearest(p, static_cast<std::size_t>(k) + 1);
    Point mean = Point::Zero();
    for (const auto& n : nn) mean += cloud.points[n.index];
    mean /= static_cast<double>(nn.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& n : nn) {
      const Eigen::Vector3d d = cloud.points[n.index] - mean;
      scatter.noalias() += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    Eigen::Vector3d normal = eig.eigenvectors().col(0).normalized();
    const Eigen::Vector3d view =
        cloud.sensor_origin ? Eigen::Vector3d(*cloud.sensor_origin - p) : Eigen::Vector3d::UnitZ();
    if (normal.dot(view) < 0) normal = -normal;
    field.normals[i] = normal;
  }
  return field;
}

// ---------------------------------------------------------------------------
// ESF

namespace {

constexpr int kGrid = 64;

enum EsfHistogram {
  kD2In = 0,
  kD2Out,
  kD2Mixed,
  kD2Ratio,
  kA3In,
  kA3Out,
  kA3Mixed,
  kD3In,
  kD3Out,
  kD3Mixed,
};

enum class LineClass { in, out, mixed };

struct LineResult {
  LineClass cls;
  double ratio;
};

using Voxel = std::array<int, 3>;

class Occupancy {
 public:
  Occupancy() : bits_(kGrid * kGrid * kGrid, 0) {}
  void set(const Voxel& v) { bits_[index(v)] = 1; }
  bool get(const Voxel& v) const { return bits_[index(v)] != 0; }

 private:
  static std::size_t index(const Voxel& v) {
    return (static_cast<std::size_t>(v[0]) * kGrid + v[1]) * kGrid + v[2];
  }
  std::vector<std::uint8_t> bits_;
};

// Walks the 3-d Bresenham line between two voxels and reports the fraction of
// strictly interior voxels that are occupied. Lines without interior voxels
// count as fully inside.
LineResult trace_line(const Occupancy& occ, const Voxel& a, const Voxel& b) {
  const int dx = std::abs(b[0] - a[0]);
  const int dy = std::abs(b[1] - a[1]);
  const int dz = std::abs(b[2] - a[2]);
  const int sx = b[0] > a[0] ? 1 : -1;
  const int sy = b[1] > a[1] ? 1 : -1;
  const int sz = b[2] > a[2] ? 1 : -1;
  const int steps = std::max({dx, dy, dz});
  if (steps <= 1) return {LineClass::in, 1.0};

  int x = a[0], y = a[1], z = a[2];
  int interior = 0;
  int occupied = 0;
  auto visit = [&](int s) {
    if (s < steps) {  // the final step lands on b itself
      ++interior;
      if (occ.get({x, y, z})) ++occupied;
    }
  };
  if (dx >= dy && dx >= dz) {
    int e1 = 2 * dy - dx, e2 = 2 * dz - dx;
    for (int s = 1; s <= steps; ++s) {
      x += sx;
      if (e1 >= 0) { y += sy; e1 -= 2 * dx; }
      if (e2 >= 0) { z += sz; e2 -= 2 * dx; }
      e1 += 2 * dy;
      e2 += 2 * dz;
      visit(s);
    }
  } else if (dy >= dx && dy >= dz) {
    int e1 = 2 * dx - dy, e2 = 2 * dz - dy;
    for (int s = 1; s <= steps; ++s) {
      y += sy;
      if (e1 >= 0) { x += sx; e1 -= 2 * dy; }
      if (e2 >= 0) { z += sz; e2 -= 2 * dy; }
      e1 += 2 * dx;
      e2 += 2 * dz;
      visit(s);
    }
  } else {
    int e1 = 2 * dy - dz, e2 = 2 * dx - dz;
    for (int s = 1; s <= steps; ++s) {
      z += sz;
      if (e1 >= 0) { y += sy; e1 -= 2 * dz; }
      if (e2 >= 0) { x += sx; e2 -= 2 * dz; }
      e1 += 2 * dy;
      e2 += 2 * dx;
      visit(s);
    }
  }
  const double ratio = static_cast<double>(occupied) / static_cast<double>(interior);
  if (occupied == interior) return {LineClass::in, ratio};
  if (occupied == 0) return {LineClass::out, ratio};
  return {LineClass::mixed, ratio};
}

int bin_of(double normalized) {
  const auto b = static_cast<int>(std::floor(normalized * kEsfBins));
  return std::clamp(b, 0, kEsfBins - 1);
}

int offset(LineClass cls) {
  switch (cls) {
    case LineClass::in: return 0;
    case LineClass::out: return 1;
    case LineClass::mixed: return 2;
  }
  return 2;
}

}  // namespace

Descriptor compute_esf(const PointCloud& cloud, int n_samples, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (n < 3) fail(ErrorCode::TooFewPoints, "ESF needs at least 3 points");
  require(n_samples > 0, ErrorCode::InvalidArgument, "ESF sample count must be positive");

  // Principal-axes frame centered at the centroid.
  Point centroid = Point::Zero();
  for (const auto& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : cloud.points) {
    const Eigen::Vector3d d = p - centroid;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Matrix3d axes = eig.eigenvectors().rowwise().reverse();  // major first
  // Axis signs follow the third moment so the voxelization (and hence line
  // tracing) is a function of the shape alone.
  for (int k = 0; k < 3; ++k) {
    double skew = 0.0;
    for (const auto& p : cloud.points) skew += std::pow(axes.col(k).dot(p - centroid), 3);
    if (skew < 0) axes.col(k) *= -1.0;
  }
  std::vector<Eigen::Vector3d> local(n);
  double half = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    local[i] = axes.transpose() * (cloud.points[i] - centroid);
    half = std::max(half, local[i].cwiseAbs().maxCoeff());
  }
  if (!(half > 0)) half = 1.0;
  const double voxel = 2.0 * half / kGrid;
  const double diag = 2.0 * half * std::sqrt(3.0);
  const double max_area = std::sqrt(3.0) / 2.0 * (2.0 * half) * (2.0 * half);

  Occupancy occ;
  std::vector<Voxel> voxels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      const auto idx = static_cast<int>(std::floor((local[i][k] + half) / voxel));
      voxels[i][k] = std::clamp(idx, 0, kGrid - 1);
    }
    occ.set(voxels[i]);
  }

  std::array<std::array<double, kEsfBins>, kEsfHistograms> hist{};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  for (int s = 0; s < n_samples; ++s) {
    const std::size_t i1 = pick(rng);
    std::size_t i2 = pick(rng);
    while (i2 == i1) i2 = pick(rng);
    std::size_t i3 = pick(rng);
    while (i3 == i1 || i3 == i2) i3 = pick(rng);

    const Eigen::Vector3d& p1 = local[i1];
    const Eigen::Vector3d& p2 = local[i2];
    const Eigen::Vector3d& p3 = local[i3];
    const LineResult l12 = trace_line(occ, voxels[i1], voxels[i2]);
    const LineResult l13 = trace_line(occ, voxels[i1], voxels[i3]);
    const LineResult l23 = trace_line(occ, voxels[i2], voxels[i3]);

    const std::array<std::pair<double, const LineResult*>, 3> pairs{
        {{(p2 - p1).norm(), &l12}, {(p3 - p1).norm(), &l13}, {(p3 - p2).norm(), &l23}}};
    for (const auto& [dist, line] : pairs) {
      hist[kD2In + offset(line->cls)][bin_of(dist / diag)] += 1.0;
      hist[kD2Ratio][bin_of(line->ratio)] += 1.0;
    }

    const Eigen::Vector3d e2 = p2 - p1;
    const Eigen::Vector3d e3 = p3 - p1;
    double angle = 0.0;
    const double denom = e2.norm() * e3.norm();
    if (denom > 0) angle = std::acos(std::clamp(e2.dot(e3) / denom, -1.0, 1.0));
    hist[kA3In + offset(l23.cls)][bin_of(angle / std::numbers::pi)] += 1.0;

    const double area = 0.5 * e2.cross(e3).norm();
    LineClass tri = LineClass::mixed;
    if (l12.cls == LineClass::in && l13.cls == LineClass::in && l23.cls == LineClass::in) {
      tri = LineClass::in;
    } else if (l12.cls == LineClass::out && l13.cls == LineClass::out &&
               l23.cls == LineClass::out) {
      tri = LineClass::out;
    }
    hist[kD3In + offset(tri)][bin_of(std::sqrt(area / max_area))] += 1.0;
  }

  Descriptor d{DescriptorKind::esf, Eigen::VectorXd(kEsfLength)};
  for (int h = 0; h < kEsfHistograms; ++h) {
    double total = 0.0;
    for (double v : hist[h]) total += v;
    for (int b = 0; b < kEsfBins; ++b) {
      // An empty family carries no shape information: uniform mass.
      d.values[h * kEsfBins + b] = total > 0 ? hist[h][b] / total : 1.0 / kEsfBins;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// SHOT

namespace {

// Majority of signed projections decides; ties fall back to the sign of the sum.
bool should_flip(const std::vector<Eigen::Vector3d>& offsets, const Eigen::Vector3d& axis) {
  std::size_t pos = 0, neg = 0;
  double sum = 0.0;
  for (const auto& d : offsets) {
    const double t = d.dot(axis);
    if (t > 0) ++pos;
    if (t < 0) ++neg;
    sum += t;
  }
  if (neg != pos) return neg > pos;
  return sum < 0;
}

}  // namespace

ShotResult compute_shot_with_frame(const PointCloud& cloud, const NormalField& normals) {
  const std::size_t n = cloud.size();
  if (n < 3) fail(ErrorCode::TooFewPoints, "SHOT needs at least 3 points");
  require(normals.normals.size() == n, ErrorCode::DimensionMismatch,
          "normal field size differs from cloud size");

  ShotResult result;
  ShotFrame& frame = result.frame;
  for (const auto& p : cloud.points) frame.center += p;
  frame.center /= static_cast<double>(n);

  std::vector<Eigen::Vector3d> offsets(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    offsets[i] = cloud.points[i] - frame.center;
    dist[i] = offsets[i].norm();
    frame.support_radius = std::max(frame.support_radius, dist[i]);
  }

  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = frame.support_radius - dist[i];
    scatter.noalias() += w * offsets[i] * offsets[i].transpose();
    weight_sum += w;
  }
  bool degenerate = !(weight_sum > 0);
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();
  if (!degenerate) {
    scatter /= weight_sum;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    const Eigen::Vector3d& ev = eig.eigenvalues();
    if (!(ev[2] > 0) || ev[2] - ev[0] <= 1e-12 * ev[2]) {
      degenerate = true;
    } else {
      Eigen::Vector3d x = eig.eigenvectors().col(2);
      Eigen::Vector3d z = eig.eigenvectors().col(0);
      if (should_flip(offsets, x)) x = -x;
      if (should_flip(offsets, z)) z = -z;
      axes.col(0) = x;
      axes.col(1) = z.cross(x);
      axes.col(2) = z;
    }
  }
  frame.axes = axes;
  frame.degenerate = degenerate;

  Eigen::VectorXd hist = Eigen::VectorXd::Zero(kShotLength);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d q = axes.transpose() * offsets[i];
    const double azimuth = std::atan2(q.y(), q.x()) + std::numbers::pi;  // [0, 2pi]
    const int az = std::clamp(static_cast<int>(std::floor(azimuth / two_pi * 8.0)), 0, 7);
    const int el = q.z() >= 0 ? 1 : 0;
    const int rad = dist[i] > 0.5 * frame.support_radius ? 1 : 0;
    const double cosine = std::clamp(normals.normals[i].dot(axes.col(2)), -1.0, 1.0);
    const int bin =
        std::clamp(static_cast<int>(std::floor((cosine + 1.0) / 2.0 * kShotBins)), 0, kShotBins - 1);
    const int division = (az * 2 + el) * 2 + rad;
    hist[division * kShotBins + bin] += 1.0;
  }
  const double norm = hist.norm();
  if (norm > 0) hist /= norm;
  result.descriptor = {DescriptorKind::shot, std::move(hist)};
  return result;
}

Descriptor compute_shot(const PointCloud& cloud, const NormalField& normals) {
  return compute_shot_with_frame(cloud, normals).descriptor;
}

// ---------------------------------------------------------------------------
// Fusion

namespace {

void check_pair(const Descriptor& shot, const Descriptor& esf) {
  if (shot.kind != DescriptorKind::shot || esf.kind != DescriptorKind::esf) {
    fail(ErrorCode::KindMismatch, "expected a (SHOT, ESF) descriptor pair");
  }
  require(shot.values.size() == kShotLength && esf.values.size() == kEsfLength,
          ErrorCode::DimensionMismatch, "descriptor length does not match its kind");
}

}  // namespace

Descriptor concat_descriptor(const Descriptor& shot, const Descriptor& esf) {
  check_pair(shot, esf);
  Descriptor out{DescriptorKind::concat, Eigen::VectorXd(kConcatLength)};
  out.values << shot.values, esf.values;
  return out;
}

SvdFusion fuse_svd(const Descriptor& shot, const Descriptor& esf) {
  check_pair(shot, esf);
  SvdFusion f;
  f.stacked = Eigen::MatrixX2d::Zero(kEsfLength, 2);
  f.stacked.col(0) = esf.values;
  f.stacked.col(1).head(kShotLength) = shot.values;
  f.centered = f.stacked.rowwise() - f.stacked.colwise().mean();

  Eigen::JacobiSVD<Eigen::MatrixX2d> svd(f.centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  f.sigma1 = svd.singularValues()[0];
  f.sigma2 = svd.singularValues()[1];
  f.u1 = svd.matrixU().col(0);
  f.v1 = svd.matrixV().col(0);

  const double anchor = f.u1.dot(f.centered.col(0));
  bool flip = anchor < 0;
  if (anchor == 0) {
    for (Eigen::Index i = 0; i < f.u1.size(); ++i) {
      if (f.u1[i] != 0) {
        flip = f.u1[i] < 0;
        break;
      }
    }
  }
  if (flip) {
    f.u1 = -f.u1;
    f.v1 = -f.v1;
  }
  return f;
}

Descriptor compute_clue(const Descriptor& shot, const Descriptor& esf) {
  const SvdFusion f = fuse_svd(shot, esf);
  return {DescriptorKind::clue, f.sigma1 * f.u1};
}

}  // namespace vitac
