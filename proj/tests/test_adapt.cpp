#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "vitac/adapt.hpp"
#include "vitac/error.hpp"

#include <numbers>

using namespace vitac;

namespace {

double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

// Twice the integral of Phi(t) Phi(t)^T on [0, 1], Phi taken from the model.
Eigen::MatrixXd quadrature_kernel(const GfkModel& m) {
  return 2.0 * oracle::simpson(
                   [&](double t) {
                     const Eigen::MatrixXd phi = geodesic_point(m, t);
                     return Eigen::MatrixXd(phi * phi.transpose());
                   },
                   2001);
}

FeatureSet random_set(Eigen::Index n, Eigen::Index D, oracle::Rng& rng) {
  FeatureSet s;
  s.vectors = oracle::gaussian(n, D, rng);
  return s;
}

}  // namespace

TEST_CASE("pca_basis") {
  oracle::Rng rng(61);

  SUBCASE("data on a line") {
    const Eigen::Vector3d dir = Eigen::Vector3d(1.0, -2.0, 0.5).normalized();
    FeatureSet s;
    s.vectors.resize(20, 3);
    for (int i = 0; i < 20; ++i) s.vectors.row(i) = (0.3 * i - 1.0) * dir.transpose() + Eigen::RowVector3d(4, 5, 6);
    const Eigen::MatrixXd b = pca_basis(s, 1);
    CHECK(std::abs(b.col(0).dot(dir)) >= 1.0 - 1e-9);
    CHECK_THROWS_AS(pca_basis(s, 2), Error);
    try {
      pca_basis(s, 2);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::RankDeficient);
    }
  }

  SUBCASE("orthonormal, signed, and optimal") {
    FeatureSet s = random_set(60, 8, rng);
    s.vectors = s.vectors * oracle::gaussian(8, 8, rng);  // correlated columns
    const Eigen::MatrixXd b = pca_basis(s, 3);
    CHECK((b.transpose() * b - Eigen::MatrixXd::Identity(3, 3)).norm() <= 1e-9);
    for (int c = 0; c < 3; ++c) {
      Eigen::Index arg;
      b.col(c).cwiseAbs().maxCoeff(&arg);
      CHECK(b(arg, c) > 0);
    }
    const Eigen::MatrixXd centered = s.vectors.rowwise() - s.vectors.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / (s.size() - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);  // ascending
    const double trailing = eig.eigenvalues().head(5).sum();
    const Eigen::MatrixXd residual = centered - centered * b * b.transpose();
    const double err = residual.squaredNorm() / (s.size() - 1.0);
    CHECK(std::abs(err - trailing) <= 1e-8);
  }
}

TEST_CASE("principal angles") {
  oracle::Rng rng(67);

  SUBCASE("identical subspaces") {
    const Eigen::MatrixXd x = oracle::random_orthonormal(12, 4, rng);
    const PrincipalAngles a = principal_angles(x, x);
    CHECK(a.theta.cwiseAbs().maxCoeff() <= 1e-9);
  }

  SUBCASE("orthogonal subspaces") {
    Eigen::MatrixXd xs = Eigen::MatrixXd::Zero(8, 2), xt = Eigen::MatrixXd::Zero(8, 2);
    xs(0, 0) = xs(1, 1) = 1.0;
    xt(2, 0) = xt(3, 1) = 1.0;
    const PrincipalAngles a = principal_angles(xs, xt);
    for (int j = 0; j < 2; ++j) CHECK(a.theta[j] == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
  }

  SUBCASE("random pair against a generic SVD") {
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::MatrixXd xs = oracle::random_orthonormal(30, 5, rng);
      const Eigen::MatrixXd xt = oracle::random_orthonormal(30, 5, rng);
      const PrincipalAngles a = principal_angles(xs, xt);
      Eigen::BDCSVD<Eigen::MatrixXd> svd(xs.transpose() * xt);
      Eigen::VectorXd expected = svd.singularValues().cwiseMin(1.0).array().acos().matrix();
      std::sort(expected.data(), expected.data() + expected.size());
      CHECK((a.theta - expected).cwiseAbs().maxCoeff() <= 1e-9);
      for (int j = 1; j < 5; ++j) CHECK(a.theta[j] >= a.theta[j - 1]);

      // The two decompositions share V.
      const Eigen::MatrixXd rs = orthogonal_complement(xs);
      const Eigen::VectorXd c = a.theta.array().cos().matrix();
      const Eigen::VectorXd s = a.theta.array().sin().matrix();
      CHECK((xs.transpose() * xt - a.u1 * c.asDiagonal() * a.v.transpose()).norm() <= 1e-9);
      CHECK((rs.transpose() * xt + a.u2 * s.asDiagonal() * a.v.transpose()).norm() <= 1e-9);
      CHECK((a.u2.transpose() * a.u2 - Eigen::MatrixXd::Identity(5, 5)).norm() <= 1e-9);
    }
  }

  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(principal_angles(Eigen::MatrixXd::Identity(5, 2), Eigen::MatrixXd::Identity(6, 2)), Error);
  }
}

TEST_CASE("subspace pair invariants") {
  oracle::Rng rng(71);
  const GfkModel m = GfkModel::from_bases(oracle::random_orthonormal(20, 4, rng),
                                          oracle::random_orthonormal(20, 4, rng));
  const auto& s = m.subspaces();
  CHECK((s.source_basis.transpose() * s.source_basis - Eigen::MatrixXd::Identity(4, 4)).norm() <= 1e-9);
  CHECK((s.source_complement.transpose() * s.source_complement - Eigen::MatrixXd::Identity(16, 16)).norm() <= 1e-9);
  CHECK((s.source_basis.transpose() * s.source_complement).norm() <= 1e-9);
}

TEST_CASE("geodesic flow") {
  oracle::Rng rng(73);
  const Eigen::MatrixXd xs = oracle::random_orthonormal(25, 6, rng);
  const Eigen::MatrixXd xt = oracle::random_orthonormal(25, 6, rng);
  const GfkModel m = GfkModel::from_bases(xs, xt);
  const Eigen::MatrixXd p0 = geodesic_point(m, 0.0);
  const Eigen::MatrixXd p1 = geodesic_point(m, 1.0);
  CHECK((p0 * p0.transpose() - xs * xs.transpose()).norm() <= 1e-9);
  CHECK((p1 * p1.transpose() - xt * xt.transpose()).norm() <= 1e-8);
  for (int i = 0; i <= 100; ++i) {
    const Eigen::MatrixXd p = geodesic_point(m, i / 100.0);
    CHECK((p.transpose() * p - Eigen::MatrixXd::Identity(6, 6)).norm() <= 1e-9);
  }
  CHECK_THROWS_AS(geodesic_point(m, 1.5), Error);
  CHECK_THROWS_AS(geodesic_point(GfkModel::from_kernel_matrix(Eigen::MatrixXd::Identity(3, 3)), 0.5), Error);
}

TEST_CASE("GFK kernel") {
  oracle::Rng rng(79);

  SUBCASE("identical subspaces") {
    const Eigen::MatrixXd x = oracle::random_orthonormal(15, 3, rng);
    const GfkModel m = GfkModel::from_bases(x, x);
    CHECK((m.kernel() - 2.0 * x * x.transpose()).norm() <= 1e-10);
  }

  SUBCASE("closed form equals twice the quadrature") {
    for (int trial = 0; trial < 3; ++trial) {
      const GfkModel m = GfkModel::from_bases(oracle::random_orthonormal(50, 5, rng),
                                              oracle::random_orthonormal(50, 5, rng));
      CHECK(relative_frobenius(m.kernel(), quadrature_kernel(m)) <= 1e-6);
    }
  }

  SUBCASE("small angles use the series branch") {
    const Eigen::MatrixXd xs = oracle::random_orthonormal(10, 3, rng);
    const Eigen::MatrixXd tilt = xs + 1e-6 * orthogonal_complement(xs).leftCols(3);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(tilt);
    const Eigen::MatrixXd xt = qr.householderQ() * Eigen::MatrixXd::Identity(10, 3);
    const GfkModel m = GfkModel::from_bases(xs, xt);
    CHECK(m.theta().maxCoeff() < 1e-4);
    CHECK(relative_frobenius(m.kernel(), quadrature_kernel(m)) <= 1e-6);
  }

  SUBCASE("block weights are continuous at the series threshold") {
    const Eigen::Vector3d below = gfk_block_weights(1e-4 * (1 - 1e-12));
    const Eigen::Vector3d above = gfk_block_weights(1e-4 * (1 + 1e-12));
    CHECK((below - above).norm() <= 1e-10);
    const Eigen::Vector3d zero = gfk_block_weights(0.0);
    CHECK(zero == Eigen::Vector3d(2.0, 0.0, 0.0));
  }

  SUBCASE("symmetric, PSD, factor reproduces kernel") {
    for (int trial = 0; trial < 10; ++trial) {
      const GfkModel m = gfk_fit(random_set(40, 30, rng), random_set(25, 30, rng), 6);
      const Eigen::MatrixXd& g = m.kernel();
      CHECK((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
      CHECK((m.factor() * m.factor().transpose() - g).norm() <= 1e-10 * g.norm());
    }
  }

  SUBCASE("depends only on the spans") {
    const Eigen::MatrixXd xs = oracle::random_orthonormal(20, 4, rng);
    const Eigen::MatrixXd xt = oracle::random_orthonormal(20, 4, rng);
    const Eigen::MatrixXd q = oracle::random_orthonormal(4, 4, rng);
    const GfkModel a = GfkModel::from_bases(xs, xt);
    const GfkModel b = GfkModel::from_bases(xs * q, xt * q.transpose());
    CHECK((a.kernel() - b.kernel()).norm() <= 1e-8);
  }

  SUBCASE("target labels are ignored") {
    const FeatureSet src = random_set(30, 12, rng);
    FeatureSet tgt = random_set(20, 12, rng);
    tgt.domain = Domain::target;
    const GfkModel a = gfk_fit(src, tgt, 4);
    tgt.labels.assign(20, 3);
    const GfkModel b = gfk_fit(src, tgt, 4);
    CHECK(a.kernel() == b.kernel());
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(gfk_fit(random_set(10, 5, rng), random_set(10, 6, rng), 2), Error);
    CHECK_THROWS_AS(gfk_fit(random_set(3, 6, rng), random_set(10, 6, rng), 4), Error);
  }
}

TEST_CASE("GFK similarity and distance") {
  oracle::Rng rng(83);
  const GfkModel identity = GfkModel::from_kernel_matrix(Eigen::MatrixXd::Identity(7, 7));
  const Eigen::VectorXd x = oracle::gaussian(7, 1, rng);
  const Eigen::VectorXd y = oracle::gaussian(7, 1, rng);
  CHECK(gfk_similarity(identity, x, y) == doctest::Approx(x.dot(y)).epsilon(1e-14));
  CHECK(gfk_distance(identity, x, y) == doctest::Approx((x - y).norm()).epsilon(1e-14));
  CHECK(gfk_distance(identity, x, x) == 0.0);
  CHECK_THROWS_AS(gfk_similarity(identity, x, Eigen::VectorXd::Zero(6)), Error);

  const GfkModel m = GfkModel::from_bases(oracle::random_orthonormal(20, 5, rng),
                                          oracle::random_orthonormal(20, 5, rng));
  const Eigen::MatrixXd quad = quadrature_kernel(m);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd a = oracle::gaussian(20, 1, rng);
    const Eigen::VectorXd b = oracle::gaussian(20, 1, rng);
    const double s = gfk_similarity(m, a, b);
    CHECK(s == gfk_similarity(m, b, a));
    CHECK(std::abs(s - a.dot(quad * b)) <= 1e-6 * std::max(1.0, std::abs(s)));
    CHECK(gfk_similarity(m, a, a) >= -1e-8 * a.squaredNorm());
  }

  // Triangle inequality over sampled triples for a random PSD kernel.
  const Eigen::MatrixXd f = oracle::gaussian(10, 6, rng);
  const GfkModel psd = GfkModel::from_kernel_matrix(f * f.transpose());
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd a = oracle::gaussian(10, 1, rng);
    const Eigen::VectorXd b = oracle::gaussian(10, 1, rng);
    const Eigen::VectorXd c = oracle::gaussian(10, 1, rng);
    CHECK(gfk_distance(psd, a, c) <= gfk_distance(psd, a, b) + gfk_distance(psd, b, c) + 1e-9);
    CHECK(gfk_distance(psd, a, b) == gfk_distance(psd, b, a));
  }

  // Scaling G preserves the distance ranking.
  const GfkModel scaled = GfkModel::from_kernel_matrix(10.0 * m.kernel());
  const Eigen::VectorXd q = oracle::gaussian(20, 1, rng);
  const Eigen::MatrixXd pts = oracle::gaussian(50, 20, rng);
  std::vector<int> order_a(50), order_b(50);
  std::iota(order_a.begin(), order_a.end(), 0);
  std::iota(order_b.begin(), order_b.end(), 0);
  std::vector<double> da(50), db(50);
  for (int i = 0; i < 50; ++i) {
    da[i] = gfk_distance(m, q, pts.row(i).transpose());
    db[i] = gfk_distance(scaled, q, pts.row(i).transpose());
  }
  std::stable_sort(order_a.begin(), order_a.end(), [&](int i, int j) { return da[i] < da[j]; });
  std::stable_sort(order_b.begin(), order_b.end(), [&](int i, int j) { return db[i] < db[j]; });
  CHECK(order_a == order_b);

  // Embedded Euclidean distance equals the kernel distance.
  const Eigen::VectorXd a = oracle::gaussian(20, 1, rng);
  const Eigen::VectorXd b = oracle::gaussian(20, 1, rng);
  CHECK((m.embed(a) - m.embed(b)).norm() == doctest::Approx(gfk_distance(m, a, b)).epsilon(1e-9));
}

TEST_CASE("pca_transfer") {
  oracle::Rng rng(89);
  const FeatureSet src = random_set(30, 10, rng);
  const FeatureSet tgt = random_set(12, 10, rng);
  const PcaTransfer t = pca_transfer(src, tgt, 4);
  CHECK(t.source.rows() == 30);
  CHECK(t.target.rows() == 12);
  CHECK(t.source.cols() == 4);
  CHECK(t.target.cols() == 4);

  Eigen::MatrixXd both(42, 10);
  both << src.vectors, tgt.vectors;
  const Eigen::MatrixXd centered = both.rowwise() - both.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 41.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double trailing = eig.eigenvalues().head(6).sum();
  const double err = (centered - centered * t.basis * t.basis.transpose()).squaredNorm() / 41.0;
  CHECK(std::abs(err - trailing) <= 1e-8);
}
