#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "vitac/cloud.hpp"
#include "vitac/equalize.hpp"
#include "vitac/error.hpp"

#include <map>
#include <random>

using namespace vitac;

namespace {

PointCloud random_cloud(std::size_t n, double extent, oracle::Rng& rng) {
  std::uniform_real_distribution<double> u(-extent, extent);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

PointCloud grid_plane(int n, double pitch, double z = 0.0) {
  PointCloud c;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c.points.emplace_back(i * pitch, j * pitch, z);
  return c;
}

}  // namespace

TEST_CASE("radius_neighbors edge cases and scan agreement") {
  oracle::Rng rng(3);
  const PointCloud cloud = random_cloud(200, 0.05, rng);

  const auto self = radius_neighbors(cloud, cloud.points[17], 0.0);
  REQUIRE(self.size() == 1);
  CHECK(self[0] == 17);

  CHECK(radius_neighbors(cloud, Point::Zero(), 1.0).size() == cloud.size());

  const KdTree tree(cloud.points);
  for (const auto& c : cloud.points) {
    const auto expected = oracle::radius_scan(cloud.points, c, 0.03);
    CHECK(radius_neighbors(cloud, c, 0.03) == expected);
    CHECK(tree.radius(c, 0.03) == expected);
  }
}

TEST_CASE("kd-tree nearest matches sorted scan") {
  oracle::Rng rng(5);
  const PointCloud cloud = random_cloud(500, 1.0, rng);
  const KdTree tree(cloud.points);
  const PointCloud queries = random_cloud(50, 1.2, rng);
  for (const auto& q : queries.points) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      all.emplace_back((cloud.points[i] - q).squaredNorm(), i);
    std::sort(all.begin(), all.end());
    const auto got = tree.nearest(q, 7);
    REQUIRE(got.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(got[i].index == all[i].second);
  }
}

TEST_CASE("fit_local_plane") {
  SUBCASE("points on z = 0") {
    const PointCloud c = grid_plane(5, 0.01);
    const LocalPlane p = fit_local_plane(c.points);
    CHECK((p.normal - Eigen::Vector3d::UnitZ()).norm() < 1e-12);
    Point mean = Point::Zero();
    for (const auto& q : c.points) mean += q;
    mean /= static_cast<double>(c.size());
    CHECK((p.centroid - mean).norm() < 1e-15);
  }
  SUBCASE("three points lie on their plane") {
    const std::vector<Point> tri{{0.1, 0.2, 0.3}, {-0.4, 0.5, 0.1}, {0.3, -0.2, 0.7}};
    const LocalPlane p = fit_local_plane(tri);
    for (const auto& q : tri) CHECK(std::abs(p.normal.dot(q - p.centroid)) < 1e-12);
  }
  SUBCASE("frame is orthonormal") {
    oracle::Rng rng(9);
    const LocalPlane p = fit_local_plane(random_cloud(30, 1.0, rng).points);
    Eigen::Matrix3d f;
    f << p.tangent_u, p.tangent_v, p.normal;
    CHECK((f.transpose() * f - Eigen::Matrix3d::Identity()).norm() < 1e-9);
  }
  SUBCASE("total least squares beats random planes") {
    oracle::Rng rng(11);
    std::normal_distribution<double> noise(0.0, 0.001);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    std::vector<Point> pts;
    for (int i = 0; i < 200; ++i) pts.emplace_back(u(rng), u(rng), 0.3 * u(rng) + noise(rng));
    const LocalPlane p = fit_local_plane(pts);
    auto cost = [&](const Eigen::Vector3d& n, const Point& c) {
      double s = 0.0;
      for (const auto& q : pts) s += std::pow(n.dot(q - c), 2);
      return s;
    };
    const double best = cost(p.normal, p.centroid);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
      const Eigen::Vector3d n = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
      const Point c = p.centroid + 0.01 * Eigen::Vector3d(g(rng), g(rng), g(rng));
      CHECK(best <= cost(n, c) + 1e-15);
    }
  }
  SUBCASE("normal invariant under permutation") {
    oracle::Rng rng(13);
    auto pts = random_cloud(40, 1.0, rng).points;
    const auto a = fit_local_plane(pts).normal;
    std::shuffle(pts.begin(), pts.end(), rng);
    CHECK((fit_local_plane(pts).normal - a).norm() < 1e-9);
  }
  SUBCASE("degenerate inputs") {
    const std::vector<Point> two{{0, 0, 0}, {1, 0, 0}};
    const std::vector<Point> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    for (const auto* pts : {&two, &line}) {
      try {
        fit_local_plane(*pts);
        FAIL("expected DegenerateNeighborhood");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateNeighborhood);
      }
    }
  }
}

TEST_CASE("voxel_filter") {
  CHECK(voxel_filter(PointCloud{}, 0.005).empty());

  PointCloud single;
  single.points.emplace_back(0.0123, -0.4, 7.0);
  const auto one = voxel_filter(single, 0.005);
  REQUIRE(one.size() == 1);
  CHECK(one.points[0] == single.points[0]);

  PointCloud eight;
  Point mean = Point::Zero();
  for (int i = 0; i < 8; ++i) {
    eight.points.emplace_back(0.0101 + 0.0003 * i, 0.0212 + 0.0001 * (i % 3), 0.0302 + 0.0004 * (i % 2));
    mean += eight.points.back();
  }
  mean /= 8.0;
  const auto merged = voxel_filter(eight, 0.005);
  REQUIRE(merged.size() == 1);
  CHECK((merged.points[0] - mean).norm() <= 1e-12);

  SUBCASE("count identity, exact centroids, idempotent count") {
    oracle::Rng rng(17);
    PointCloud cloud = random_cloud(3000, 0.05, rng);
    cloud.modality = Modality::tactile;
    cloud.label = "7";
    const double edge = 0.005;
    std::map<std::array<long, 3>, std::pair<Point, int>> groups;
    for (const auto& p : cloud.points) {
      auto& g = groups[{static_cast<long>(std::floor(p.x() / edge)),
                        static_cast<long>(std::floor(p.y() / edge)),
                        static_cast<long>(std::floor(p.z() / edge))}];
      if (g.second == 0) g.first = Point::Zero();
      g.first += p;
      ++g.second;
    }
    const PointCloud out = voxel_filter(cloud, edge);
    REQUIRE(out.size() == groups.size());
    CHECK(out.modality == Modality::tactile);
    CHECK(out.label == cloud.label);
    std::size_t i = 0;
    for (const auto& [key, g] : groups) {
      CHECK((out.points[i++] - g.first / g.second).norm() <= 1e-12);
    }
    const PointCloud again = voxel_filter(out, edge);
    CHECK(again.size() == out.size());
  }
}

TEST_CASE("mls_resample") {
  EqualizationParams params;
  params.upsample_step = 0.001;
  params.search_radius = 0.02;

  SUBCASE("defaults") {
    const EqualizationParams d;
    CHECK(d.upsample_step == 0.0003);
    CHECK(d.search_radius == 0.06);
    CHECK(d.poly_degree == 2);
    CHECK(d.voxel_edge == 0.005);
  }

  SUBCASE("tilted plane is reproduced") {
    oracle::Rng rng(19);
    const Eigen::Matrix3d rot = oracle::random_rotation(rng);
    const Point offset(0.3, -0.2, 0.5);
    PointCloud cloud = grid_plane(12, 0.004);
    for (auto& p : cloud.points) p = rot * p + offset;
    const PointCloud out = mls_resample(cloud, params);
    REQUIRE(out.size() > cloud.size());
    const Eigen::Vector3d n = rot.col(2);
    for (const auto& p : out.points) CHECK(std::abs(n.dot(p - offset)) <= 1e-9);
  }

  SUBCASE("quadric surface z = x^2 + y^2 is reproduced") {
    PointCloud cloud;
    for (int i = -6; i <= 6; ++i)
      for (int j = -6; j <= 6; ++j) {
        const double x = 0.004 * i, y = 0.004 * j;
        cloud.points.emplace_back(x, y, x * x + y * y);
      }
    params.search_radius = 0.1;  // every neighborhood is the whole symmetric patch
    const PointCloud out = mls_resample(cloud, params);
    REQUIRE(!out.empty());
    double worst = 0.0;
    for (const auto& p : out.points)
      worst = std::max(worst, std::abs(p.z() - (p.x() * p.x() + p.y() * p.y())));
    CHECK(worst <= 1e-6);
  }

  SUBCASE("isolated points pass through") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    const PointCloud out = mls_resample(cloud, params);
    CHECK(out.points == cloud.points);
  }

  SUBCASE("outputs are finite") {
    oracle::Rng rng(23);
    const PointCloud out = mls_resample(random_cloud(150, 0.02, rng), params);
    for (const auto& p : out.points) CHECK(p.allFinite());
  }

  SUBCASE("empty cloud is rejected") {
    CHECK_THROWS_AS(mls_resample(PointCloud{}, params), Error);
  }
}

TEST_CASE("equalize") {
  EqualizationParams params;

  SUBCASE("planar ten-point cloud") {
    PointCloud cloud;
    cloud.modality = Modality::tactile;
    cloud.label = "3";
    for (int i = 0; i < 10; ++i) cloud.points.emplace_back(0.008 * (i % 5), 0.008 * (i / 5), 0.02);
    const PointCloud out = equalize(cloud, params);
    CHECK(out.modality == Modality::tactile);
    CHECK(out.label == cloud.label);
    std::map<VoxelKey, int> per_voxel;
    for (const auto& p : out.points) {
      CHECK(std::abs(p.z() - 0.02) <= 1e-9);
      ++per_voxel[VoxelAccumulator::key_of(p, params.voxel_edge)];
    }
    for (const auto& [k, n] : per_voxel) CHECK(n == 1);
  }

  SUBCASE("fused form equals the composition bit for bit") {
    oracle::Rng rng(29);
    std::uniform_real_distribution<double> u(0.0, 0.04);
    PointCloud cloud;
    for (int i = 0; i < 60; ++i) {
      const double x = u(rng), y = u(rng);
      cloud.points.emplace_back(x, y, 0.1 * x * y);
    }
    const PointCloud fused = equalize(cloud, params);
    const PointCloud composed = voxel_filter(mls_resample(cloud, params), params.voxel_edge);
    CHECK(fused.points == composed.points);
  }

  SUBCASE("dense and sparse samplings give similar spacing") {
    const PointCloud dense = grid_plane(41, 0.001, 0.01);
    const PointCloud sparse = grid_plane(9, 0.005, 0.01);
    const double a = mean_nearest_neighbor_spacing(equalize(dense, params).points);
    const double b = mean_nearest_neighbor_spacing(equalize(sparse, params).points);
    CHECK(std::abs(a - b) <= 0.2 * std::max(a, b));
  }

  SUBCASE("translation by whole voxels translates the output") {
    oracle::Rng rng(31);
    std::uniform_real_distribution<double> u(0.0, 0.03);
    PointCloud cloud;
    for (int i = 0; i < 40; ++i) cloud.points.emplace_back(u(rng), u(rng), 0.01);
    const Point shift(4 * params.voxel_edge, -2 * params.voxel_edge, 0.0);
    PointCloud moved = cloud;
    for (auto& p : moved.points) p += shift;
    const auto a = equalize(cloud, params);
    const auto b = equalize(moved, params);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((a.points[i] + shift - b.points[i]).norm() <= 1e-9);
  }
}
