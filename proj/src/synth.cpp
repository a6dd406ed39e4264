#include "vitac/synth.hpp"

#include "vitac/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace vitac {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRimFraction = 0.35;

Eigen::Matrix2d rotation(double angle) {
  return Eigen::Rotation2Dd(angle).toRotationMatrix();
}

double segment_distance(const Eigen::Vector2d& p, double half) {
  const double x = std::clamp(p.x(), -half, half);
  return std::hypot(p.x() - x, p.y());
}

}  // namespace

// ---------------------------------------------------------------------------
// Primitive

namespace {

Eigen::Vector2d to_local(const Primitive& prim, const Eigen::Vector2d& p) {
  return rotation(-prim.angle) * (p - prim.center);
}

// 0 at the center (or medial axis), 1 on the rim.
double rim_fraction(const Primitive& prim, const Eigen::Vector2d& l) {
  switch (prim.kind) {
    case PrimitiveKind::rect: return std::max(std::abs(l.x()) / prim.a, std::abs(l.y()) / prim.b);
    case PrimitiveKind::disc: return l.norm() / prim.a;
    case PrimitiveKind::annulus: {
      const double mid = 0.5 * (prim.a + prim.b);
      return std::abs(l.norm() - mid) / (0.5 * (prim.a - prim.b));
    }
    case PrimitiveKind::capsule: return segment_distance(l, prim.a) / prim.b;
    case PrimitiveKind::ellipse: return std::hypot(l.x() / prim.a, l.y() / prim.b);
  }
  return 2.0;
}

}  // namespace

bool Primitive::contains(const Eigen::Vector2d& p) const {
  return rim_fraction(*this, to_local(*this, p)) <= 1.0;
}

double Primitive::height_at(const Eigen::Vector2d& p) const {
  const double rho = rim_fraction(*this, to_local(*this, p));
  if (rho > 1.0) return 0.0;
  if (profile == Profile::flat) return height;
  return height * (kRimFraction + (1.0 - kRimFraction) * std::sqrt(std::max(0.0, 1.0 - rho * rho)));
}

double Primitive::area() const {
  switch (kind) {
    case PrimitiveKind::rect: return 4.0 * a * b;
    case PrimitiveKind::disc: return kPi * a * a;
    case PrimitiveKind::annulus: return kPi * (a * a - b * b);
    case PrimitiveKind::capsule: return 4.0 * a * b + kPi * b * b;
    case PrimitiveKind::ellipse: return kPi * a * b;
  }
  return 0.0;
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> Primitive::bounds() const {
  const double c = std::abs(std::cos(angle)), s = std::abs(std::sin(angle));
  Eigen::Vector2d half;
  switch (kind) {
    case PrimitiveKind::rect: half = {a * c + b * s, a * s + b * c}; break;
    case PrimitiveKind::disc:
    case PrimitiveKind::annulus: half = {a, a}; break;
    case PrimitiveKind::capsule: half = {a * c + b, a * s + b}; break;
    case PrimitiveKind::ellipse:
      half = {std::sqrt(a * a * c * c + b * b * s * s), std::sqrt(a * a * s * s + b * b * c * c)};
      break;
  }
  return {center - half, center + half};
}

namespace {

struct Polyline {
  std::vector<Eigen::Vector2d> points;
  std::vector<Eigen::Vector2d> normals;
};

Polyline arc(const Eigen::Vector2d& c, double r, double from, double to, bool outward, int segments) {
  Polyline p;
  for (int i = 0; i <= segments; ++i) {
    const double t = from + (to - from) * i / segments;
    const Eigen::Vector2d dir(std::cos(t), std::sin(t));
    p.points.push_back(c + r * dir);
    p.normals.push_back(outward ? dir : Eigen::Vector2d(-dir));
  }
  return p;
}

Polyline line(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& n) {
  return {{a, b}, {n, n}};
}

std::vector<Polyline> local_boundary(const Primitive& prim) {
  const double a = prim.a, b = prim.b;
  switch (prim.kind) {
    case PrimitiveKind::rect:
      return {line({-a, -b}, {a, -b}, {0, -1}), line({a, -b}, {a, b}, {1, 0}),
              line({a, b}, {-a, b}, {0, 1}), line({-a, b}, {-a, -b}, {-1, 0})};
    case PrimitiveKind::disc: return {arc({0, 0}, a, 0, 2 * kPi, true, 512)};
    case PrimitiveKind::annulus:
      return {arc({0, 0}, a, 0, 2 * kPi, true, 512), arc({0, 0}, b, 0, 2 * kPi, false, 512)};
    case PrimitiveKind::capsule:
      return {line({-a, -b}, {a, -b}, {0, -1}), arc({a, 0}, b, -kPi / 2, kPi / 2, true, 128),
              line({a, b}, {-a, b}, {0, 1}), arc({-a, 0}, b, kPi / 2, 3 * kPi / 2, true, 128)};
    case PrimitiveKind::ellipse: {
      Polyline p;
      constexpr int kSegments = 1024;
      for (int i = 0; i <= kSegments; ++i) {
        const double t = 2 * kPi * i / kSegments;
        p.points.emplace_back(a * std::cos(t), b * std::sin(t));
        p.normals.push_back(Eigen::Vector2d(std::cos(t) / a, std::sin(t) / b).normalized());
      }
      return {p};
    }
  }
  return {};
}

}  // namespace

std::vector<Primitive::Edge> Primitive::boundary(double spacing, double offset) const {
  require(spacing > 0, ErrorCode::InvalidArgument, "boundary spacing must be > 0");
  const Eigen::Matrix2d rot = rotation(angle);
  std::vector<Edge> out;
  double next = offset * spacing;  // arc length of the next sample
  double walked = 0.0;
  for (const Polyline& pl : local_boundary(*this)) {
    for (std::size_t i = 0; i + 1 < pl.points.size(); ++i) {
      const double len = (pl.points[i + 1] - pl.points[i]).norm();
      while (next <= walked + len && len > 0) {
        const double t = (next - walked) / len;
        const Eigen::Vector2d p = pl.points[i] + t * (pl.points[i + 1] - pl.points[i]);
        const Eigen::Vector2d n = ((1 - t) * pl.normals[i] + t * pl.normals[i + 1]).normalized();
        out.push_back({center + rot * p, rot * n});
        next += spacing;
      }
      walked += len;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objects

bool ObjectModel::contains(const Eigen::Vector2d& p) const {
  return std::any_of(parts.begin(), parts.end(), [&](const Primitive& q) { return q.contains(p); });
}

double ObjectModel::height_at(double x, double y) const {
  const Eigen::Vector2d p(x, y);
  double h = 0.0;
  for (const auto& q : parts) h = std::max(h, q.height_at(p));
  return h;
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> ObjectModel::bounds() const {
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (const auto& q : parts) {
    const auto [a, b] = q.bounds();
    lo = lo.cwiseMin(a);
    hi = hi.cwiseMax(b);
  }
  return {lo, hi};
}

double ObjectModel::silhouette_area(double step) const {
  const auto [lo, hi] = bounds();
  const auto nx = static_cast<long>(std::ceil((hi.x() - lo.x()) / step));
  const auto ny = static_cast<long>(std::ceil((hi.y() - lo.y()) / step));
  long inside = 0;
  for (long j = 0; j < ny; ++j)
    for (long i = 0; i < nx; ++i)
      if (contains({lo.x() + (i + 0.5) * step, lo.y() + (j + 0.5) * step})) ++inside;
  return static_cast<double>(inside) * step * step;
}

namespace {

Primitive rect(double cx, double cy, double angle, double a, double b, double h) {
  return {PrimitiveKind::rect, {cx, cy}, angle, a, b, h, Profile::flat};
}
Primitive disc(double cx, double cy, double r, double h) {
  return {PrimitiveKind::disc, {cx, cy}, 0.0, r, 0.0, h, Profile::flat};
}
Primitive ring(double cx, double cy, double outer, double inner, double h) {
  return {PrimitiveKind::annulus, {cx, cy}, 0.0, outer, inner, h, Profile::flat};
}
Primitive capsule(double cx, double cy, double angle, double half, double r, double h,
                  Profile profile = Profile::flat) {
  return {PrimitiveKind::capsule, {cx, cy}, angle, half, r, h, profile};
}
Primitive ellipse(double cx, double cy, double a, double b, double h, Profile profile) {
  return {PrimitiveKind::ellipse, {cx, cy}, 0.0, a, b, h, profile};
}

struct CatalogEntry {
  std::string name;
  std::vector<Primitive> parts;
};

const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> entries = [] {
    const double arm = std::atan2(0.012, 0.12);
    return std::vector<CatalogEntry>{
        {"cup_mat", {disc(0, 0, 0.05, 0.004)}},
        {"mat", {rect(0, 0, 0, 0.10, 0.075, 0.003)}},
        {"tweezers",
         {capsule(0, 0.006, arm, 0.06, 0.0045, 0.007), capsule(0, -0.006, -arm, 0.06, 0.0045, 0.007),
          rect(-0.062, 0, 0, 0.008, 0.007, 0.008)}},
        {"spanner",
         {capsule(0, 0, 0, 0.065, 0.008, 0.006), ring(0.08, 0, 0.02, 0.01, 0.007),
          ring(-0.08, 0, 0.016, 0.008, 0.007)}},
        {"socket_wrench", {capsule(0, 0, 0, 0.06, 0.01, 0.012), disc(0.075, 0, 0.022, 0.025)}},
        {"wrench",
         {rect(0, 0, 0, 0.07, 0.011, 0.006), rect(0.075, 0, 0, 0.012, 0.02, 0.008),
          rect(0.09, 0.02, 0.3, 0.018, 0.007, 0.008), rect(0.09, -0.02, -0.3, 0.018, 0.007, 0.008)}},
        {"allen_key",
         {capsule(0, 0, 0, 0.045, 0.004, 0.008), capsule(0.049, 0.018, kPi / 2, 0.018, 0.004, 0.008)}},
        {"ruler", {rect(0, 0, 0, 0.14, 0.016, 0.003)}},
        {"shaver",
         {capsule(0, 0, 0, 0.045, 0.018, 0.028, Profile::dome), rect(0.07, 0, 0, 0.012, 0.025, 0.03)}},
        {"hairpin",
         {capsule(0, 0.006, 0, 0.035, 0.003, 0.005), capsule(0, -0.006, 0, 0.035, 0.003, 0.005),
          disc(-0.036, 0, 0.009, 0.005)}},
        {"pincers",
         {capsule(0.02, 0, 0.25, 0.06, 0.006, 0.012), capsule(0.02, 0, -0.25, 0.06, 0.006, 0.012),
          ring(-0.045, 0.02, 0.014, 0.007, 0.01), ring(-0.045, -0.02, 0.014, 0.007, 0.01)}},
        {"holder", {rect(0, 0, 0, 0.05, 0.04, 0.006), rect(0, 0.03, 0, 0.05, 0.01, 0.06)}},
        {"small_tape", {ring(0, 0, 0.03, 0.014, 0.012)}},
        {"tape", {ring(0, 0, 0.048, 0.028, 0.025)}},
        {"mouse", {ellipse(0, 0, 0.058, 0.032, 0.035, Profile::dome)}},
    };
  }();
  return entries;
}

}  // namespace

int catalog_size() noexcept { return static_cast<int>(catalog().size()); }

const std::string& catalog_name(int class_id) {
  if (class_id < 0 || class_id >= catalog_size()) {
    fail(ErrorCode::UnknownClass, "no catalog entry for class " + std::to_string(class_id));
  }
  return catalog()[static_cast<std::size_t>(class_id)].name;
}

ObjectModel apply_pose(const ObjectModel& object, const PlanarPose& pose) {
  ObjectModel out = object;
  const Eigen::Matrix2d rot = rotation(pose.angle);
  for (auto& p : out.parts) {
    p.center = rot * p.center + pose.offset;
    p.angle += pose.angle;
  }
  return out;
}

ObjectModel make_object(int class_id, std::uint64_t variation_seed) {
  catalog_name(class_id);  // validates the id
  const CatalogEntry& entry = catalog()[static_cast<std::size_t>(class_id)];
  std::mt19937_64 rng(variation_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = 1.0 + 0.0238 * (2.0 * unit(rng) - 1.0);
  const double lift = 1.0 + 0.05 * (2.0 * unit(rng) - 1.0);
  PlanarPose pose;
  pose.angle = 2.0 * kPi * unit(rng);
  pose.offset = {0.01 * (2.0 * unit(rng) - 1.0), 0.01 * (2.0 * unit(rng) - 1.0)};

  ObjectModel m;
  m.class_id = class_id;
  m.name = entry.name;
  for (Primitive p : entry.parts) {
    p.center *= scale;
    p.a *= scale;
    p.b *= scale;
    p.height *= lift;
    m.parts.push_back(p);
  }
  return apply_pose(m, pose);
}

// ---------------------------------------------------------------------------
// Visual sampling

PointCloud sample_visual(const ObjectModel& object, const PlanarPose& pose, const VisualSpec& spec,
                         std::uint64_t seed) {
  require(spec.density > 0, ErrorCode::InvalidArgument, "density must be > 0");
  require(spec.noise_sigma >= 0, ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  require(spec.sensor_height > 0, ErrorCode::InvalidArgument, "sensor height must be > 0");
  const ObjectModel obj = apply_pose(object, pose);
  const auto [lo, hi] = obj.bounds();
  const Eigen::Vector2d mid = 0.5 * (lo + hi);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double step = 1.0 / std::sqrt(spec.density);

  PointCloud cloud;
  cloud.modality = Modality::visual;
  cloud.label = std::to_string(object.class_id);
  cloud.sensor_origin = Point(mid.x(), mid.y(), spec.sensor_height);

  // Top surface: one jittered sample per grid cell.
  const auto nx = static_cast<long>(std::ceil((hi.x() - lo.x()) / step));
  const auto ny = static_cast<long>(std::ceil((hi.y() - lo.y()) / step));
  for (long j = 0; j < ny; ++j) {
    for (long i = 0; i < nx; ++i) {
      const double x = lo.x() + (static_cast<double>(i) + unit(rng)) * step;
      const double y = lo.y() + (static_cast<double>(j) + unit(rng)) * step;
      const double h = obj.height_at(x, y);
      if (h > 0) cloud.points.emplace_back(x, y, h);
    }
  }

  // Side walls: the part of each boundary wall that rises above whatever
  // lies just outside it is exposed to a top-down view.
  constexpr double kProbe = 1e-5;
  for (const auto& part : obj.parts) {
    for (const auto& e : part.boundary(step, unit(rng))) {
      const Eigen::Vector2d outer = e.point + kProbe * e.normal;
      const Eigen::Vector2d inner = e.point - kProbe * e.normal;
      const double floor = obj.height_at(outer.x(), outer.y());
      const double wall = obj.height_at(inner.x(), inner.y());
      for (double z = floor + unit(rng) * step; z < wall; z += step) {
        cloud.points.emplace_back(e.point.x(), e.point.y(), z);
      }
    }
  }

  if (spec.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& p : cloud.points) p += Point(noise(rng), noise(rng), noise(rng));
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Tactile sampling

void SensorSpec::validate() const {
  require(modules_per_side >= 1, ErrorCode::InvalidArgument, "need at least one module");
  require(array_edge > 0, ErrorCode::InvalidArgument, "array edge must be > 0");
  require(force_threshold > 0, ErrorCode::InvalidArgument, "force threshold must be > 0");
  require(contact_stiffness > 0, ErrorCode::InvalidArgument, "contact stiffness must be > 0");
  require(press_depth >= 0, ErrorCode::InvalidArgument, "press depth must be >= 0");
  require(noise_sigma >= 0, ErrorCode::InvalidArgument, "noise sigma must be >= 0");
}

ExplorationGrid make_grid(const ObjectModel& object, double pitch) {
  require(pitch > 0, ErrorCode::InvalidArgument, "grid pitch must be > 0");
  const auto [lo, hi] = object.bounds();
  ExplorationGrid grid;
  grid.pitch = pitch;
  const auto x0 = static_cast<long>(std::floor(lo.x() / pitch));
  const auto x1 = static_cast<long>(std::ceil(hi.x() / pitch));
  const auto y0 = static_cast<long>(std::floor(lo.y() / pitch));
  const auto y1 = static_cast<long>(std::ceil(hi.y() / pitch));
  for (long j = y0; j <= y1; ++j)
    for (long i = x0; i <= x1; ++i)
      grid.vertices.emplace_back(static_cast<double>(i) * pitch, static_cast<double>(j) * pitch);
  return grid;
}

std::vector<ModuleReading> press(const ObjectModel& object, const SensorSpec& sensor,
                                 const Eigen::Vector2d& vertex) {
  sensor.validate();
  const int n = sensor.modules_per_side;
  const double pitch = sensor.module_pitch();
  const double centering = 0.5 * (n - 1);
  // Pad sub-samples, center first so flat regions report the module center.
  static constexpr std::array<std::array<int, 2>, 9> kPad{
      {{0, 0}, {-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

  std::vector<ModuleReading> readings;
  readings.reserve(static_cast<std::size_t>(n * n));
  double contact = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Eigen::Vector2d center = vertex + pitch * Eigen::Vector2d(c - centering, r - centering);
      ModuleReading m;
      m.row = r;
      m.col = c;
      m.position = Point(center.x(), center.y(), object.height_at(center.x(), center.y()));
      for (const auto& [dx, dy] : kPad) {
        const double x = center.x() + dx * pitch / 3.0;
        const double y = center.y() + dy * pitch / 3.0;
        const double h = object.height_at(x, y);
        if (h > m.position.z()) m.position = Point(x, y, h);
      }
      contact = std::max(contact, m.position.z());
      readings.push_back(m);
    }
  }
  for (auto& m : readings) {
    const double penetration = sensor.press_depth - (contact - m.position.z());
    m.force = sensor.contact_stiffness * std::max(0.0, penetration);
  }
  return readings;
}

PointCloud sample_tactile(const ObjectModel& object, const SensorSpec& sensor,
                          const ExplorationGrid& grid, std::uint64_t seed) {
  sensor.validate();
  PointCloud cloud;
  cloud.modality = Modality::tactile;
  cloud.label = std::to_string(object.class_id);

  std::set<std::pair<long long, long long>> seen;
  for (const auto& v : grid.vertices) {
    for (const auto& m : press(object, sensor, v)) {
      if (m.force < sensor.force_threshold || !(m.position.z() > 0)) continue;
      const auto key = std::make_pair(std::llround(m.position.x() * 1e9), std::llround(m.position.y() * 1e9));
      if (seen.insert(key).second) cloud.points.push_back(m.position);
    }
  }
  if (cloud.empty()) fail(ErrorCode::EmptyContact, "no press touched the object");

  if (sensor.noise_sigma > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sensor.noise_sigma);
    for (auto& p : cloud.points) p += Point(noise(rng), noise(rng), noise(rng));
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Plane removal

PointCloud plane_removal(const PointCloud& cloud, double epsilon, std::uint64_t seed, int iterations) {
  require(epsilon >= 0, ErrorCode::InvalidArgument, "epsilon must be >= 0");
  const std::size_t n = cloud.size();
  if (n < 3) return cloud;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  long best = -1;
  Eigen::Vector3d best_normal = Eigen::Vector3d::UnitZ();
  Point best_origin = Point::Zero();
  for (int it = 0; it < iterations; ++it) {
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    while (j == i) j = pick(rng);
    std::size_t k = pick(rng);
    while (k == i || k == j) k = pick(rng);
    const Point& p0 = cloud.points[i];
    Eigen::Vector3d normal = (cloud.points[j] - p0).cross(cloud.points[k] - p0);
    const double len = normal.norm();
    if (!(len > 0)) continue;
    normal /= len;
    long count = 0;
    for (const auto& p : cloud.points)
      if (std::abs(normal.dot(p - p0)) <= epsilon) ++count;
    if (count > best) {
      best = count;
      best_normal = normal;
      best_origin = p0;
    }
  }
  if (best < 0) return cloud;
  std::vector<Point> kept;
  for (const auto& p : cloud.points)
    if (std::abs(best_normal.dot(p - best_origin)) > epsilon) kept.push_back(p);
  return cloud.with_points(std::move(kept));
}

}  // namespace vitac
