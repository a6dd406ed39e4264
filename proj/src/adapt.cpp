#include "vitac/adapt.hpp"

#include "vitac/error.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vitac {

namespace {

void sign_by_largest_entry(Eigen::MatrixXd& basis) {
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0) basis.col(c) *= -1.0;
  }
}

}  // namespace

Eigen::MatrixXd pca_basis(const FeatureSet& set, int d) {
  require(set.size() >= 1, ErrorCode::InvalidArgument, "PCA needs at least one example");
  require(d >= 1 && d <= set.dim(), ErrorCode::InvalidArgument, "PCA dimension out of range");
  const Eigen::MatrixXd centered = set.vectors.rowwise() - set.vectors.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double tol = (s.size() > 0 ? s[0] : 0.0) * 1e-10;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > tol && s[i] > 0) ++rank;
  }
  if (d > rank) {
    fail(ErrorCode::RankDeficient, "subspace dimension " + std::to_string(d) +
                                       " exceeds data rank " + std::to_string(rank));
  }
  Eigen::MatrixXd basis = svd.matrixV().leftCols(d);
  sign_by_largest_entry(basis);
  return basis;
}

Eigen::MatrixXd orthogonal_complement(const Eigen::MatrixXd& basis) {
  const Eigen::Index D = basis.rows();
  const Eigen::Index d = basis.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(D, D);
  return q.rightCols(D - d);
}

PrincipalAngles principal_angles(const Eigen::MatrixXd& source_basis,
                                 const Eigen::MatrixXd& target_basis) {
  return principal_angles(source_basis, target_basis, orthogonal_complement(source_basis));
}

PrincipalAngles principal_angles(const Eigen::MatrixXd& source_basis,
                                 const Eigen::MatrixXd& target_basis,
                                 const Eigen::MatrixXd& source_complement) {
  if (source_basis.rows() != target_basis.rows() || source_basis.cols() != target_basis.cols() ||
      source_complement.rows() != source_basis.rows() ||
      source_complement.cols() != source_basis.rows() - source_basis.cols()) {
    fail(ErrorCode::DimensionMismatch, "subspace bases have inconsistent shapes");
  }
  const Eigen::Index d = source_basis.cols();
  const Eigen::Index rest = source_complement.cols();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(source_basis.transpose() * target_basis,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd cosines = svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);
  Eigen::MatrixXd u1 = svd.matrixU();
  Eigen::MatrixXd v = svd.matrixV();
  Eigen::MatrixXd sines_dir = -(source_complement.transpose() * target_basis) * v;

  // atan2 keeps small angles accurate where arccos alone loses half the digits.
  Eigen::VectorXd theta(d);
  Eigen::VectorXd sines(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    sines[j] = sines_dir.col(j).norm();
    theta[j] = std::atan2(sines[j], cosines[j]);
  }

  std::vector<Eigen::Index> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return theta[a] < theta[b]; });

  PrincipalAngles out;
  out.theta.resize(d);
  out.u1.resize(d, d);
  out.v.resize(d, d);
  Eigen::MatrixXd raw(rest, d);
  Eigen::VectorXd raw_norm(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    out.theta[j] = theta[order[j]];
    out.u1.col(j) = u1.col(order[j]);
    out.v.col(j) = v.col(order[j]);
    raw.col(j) = sines_dir.col(order[j]);
    raw_norm[j] = sines[order[j]];
  }

  // U2 columns are the normalized sine directions; directions with vanishing
  // sine are undetermined and get an arbitrary orthonormal completion.
  out.u2 = Eigen::MatrixXd::Zero(rest, d);
  constexpr double kTiny = 1e-12;
  std::vector<Eigen::Index> by_norm(d);
  std::iota(by_norm.begin(), by_norm.end(), 0);
  std::stable_sort(by_norm.begin(), by_norm.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return raw_norm[a] > raw_norm[b]; });
  std::vector<Eigen::Index> filled;
  std::vector<Eigen::Index> pending;
  for (Eigen::Index j : by_norm) {
    if (raw_norm[j] <= kTiny) {
      pending.push_back(j);
      continue;
    }
    Eigen::VectorXd col = raw.col(j) / raw_norm[j];
    for (Eigen::Index f : filled) col -= out.u2.col(f).dot(col) * out.u2.col(f);
    out.u2.col(j) = col.normalized();
    filled.push_back(j);
  }
  Eigen::Index probe = 0;
  for (Eigen::Index j : pending) {
    while (probe < rest) {
      Eigen::VectorXd col = Eigen::VectorXd::Unit(rest, probe++);
      for (Eigen::Index f : filled) col -= out.u2.col(f).dot(col) * out.u2.col(f);
      for (Eigen::Index f : filled) col -= out.u2.col(f).dot(col) * out.u2.col(f);
      if (col.norm() > 0.5) {
        out.u2.col(j) = col.normalized();
        filled.push_back(j);
        break;
      }
    }
  }
  return out;
}

Eigen::Vector3d gfk_block_weights(double theta) {
  const double x = 2.0 * theta;
  if (theta < 1e-4) {
    const double x2 = x * x;
    const double sinc = 1.0 - x2 / 6.0 + x2 * x2 / 120.0;  // sin(x) / x
    return {1.0 + sinc, -x / 2.0 + x * x2 / 24.0, 1.0 - sinc};
  }
  const double sinc = std::sin(x) / x;
  return {1.0 + sinc, (std::cos(x) - 1.0) / x, 1.0 - sinc};
}

GfkModel GfkModel::from_bases(const Eigen::MatrixXd& source_basis,
                              const Eigen::MatrixXd& target_basis) {
  if (source_basis.rows() != target_basis.rows() || source_basis.cols() != target_basis.cols()) {
    fail(ErrorCode::DimensionMismatch, "source and target bases differ in shape");
  }
  const Eigen::Index D = source_basis.rows();
  const Eigen::Index d = source_basis.cols();
  require(d >= 1 && d < D, ErrorCode::InvalidArgument, "need 1 <= d < D");

  GfkModel m;
  m.subspaces_.source_basis = source_basis;
  m.subspaces_.target_basis = target_basis;
  m.subspaces_.source_complement = orthogonal_complement(source_basis);
  m.subspaces_.dim = static_cast<int>(d);
  m.angles_ = principal_angles(source_basis, target_basis, m.subspaces_.source_complement);

  const Eigen::MatrixXd a = source_basis * m.angles_.u1;
  const Eigen::MatrixXd b = m.subspaces_.source_complement * m.angles_.u2;
  Eigen::VectorXd l1(d), l2(d), l3(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::Vector3d w = gfk_block_weights(m.angles_.theta[j]);
    l1[j] = w[0];
    l2[j] = w[1];
    l3[j] = w[2];
  }
  Eigen::MatrixXd g = a * l1.asDiagonal() * a.transpose();
  const Eigen::MatrixXd cross = a * l2.asDiagonal() * b.transpose();
  g += cross + cross.transpose();
  g += b * l3.asDiagonal() * b.transpose();
  m.kernel_ = 0.5 * (g + g.transpose());

  // Per-angle 2x2 blocks [[l1, l2], [l2, l3]] are PSD; their square roots give
  // a rank-2d factor of G.
  m.factor_.resize(D, 2 * d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Matrix2d block;
    block << l1[j], l2[j], l2[j], l3[j];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(block);
    const Eigen::Vector2d root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::Matrix2d half = eig.eigenvectors() * root.asDiagonal();
    Eigen::MatrixXd pair(D, 2);
    pair.col(0) = a.col(j);
    pair.col(1) = b.col(j);
    m.factor_.middleCols(2 * j, 2) = pair * half;
  }
  return m;
}

GfkModel GfkModel::from_kernel_matrix(const Eigen::MatrixXd& kernel) {
  require(kernel.rows() == kernel.cols() && kernel.rows() > 0, ErrorCode::DimensionMismatch,
          "kernel matrix must be square");
  GfkModel m;
  m.kernel_ = 0.5 * (kernel + kernel.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.kernel_);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  m.factor_ = eig.eigenvectors() * root.asDiagonal();
  return m;
}

Eigen::MatrixXd GfkModel::embed(const Eigen::MatrixXd& rows) const {
  require(rows.cols() == dim(), ErrorCode::DimensionMismatch, "feature dimension mismatch");
  return rows * factor_;
}

Eigen::VectorXd GfkModel::embed(const Eigen::VectorXd& x) const {
  require(x.size() == dim(), ErrorCode::DimensionMismatch, "feature dimension mismatch");
  return factor_.transpose() * x;
}

Eigen::MatrixXd geodesic_point(const GfkModel& model, double t) {
  require(model.has_subspaces(), ErrorCode::InvalidArgument, "model carries no subspaces");
  require(t >= 0.0 && t <= 1.0, ErrorCode::InvalidArgument, "t must lie in [0, 1]");
  const auto& s = model.subspaces();
  const auto& ang = model.angles();
  const Eigen::VectorXd c = (t * ang.theta.array()).cos().matrix();
  const Eigen::VectorXd sn = (t * ang.theta.array()).sin().matrix();
  return s.source_basis * ang.u1 * c.asDiagonal() -
         s.source_complement * ang.u2 * sn.asDiagonal();
}

GfkModel gfk_fit(const FeatureSet& source, const FeatureSet& target, int d) {
  if (source.dim() != target.dim()) {
    fail(ErrorCode::DimensionMismatch, "source and target descriptors differ in length");
  }
  require(d >= 1 && d <= source.dim() - 1, ErrorCode::InvalidArgument,
          "subspace dimension must satisfy 1 <= d <= D - 1");
  return GfkModel::from_bases(pca_basis(source, d), pca_basis(target, d));
}

double gfk_similarity(const GfkModel& model, const Eigen::VectorXd& xi,
                      const Eigen::VectorXd& xj) {
  if (xi.size() != model.dim() || xj.size() != model.dim()) {
    fail(ErrorCode::DimensionMismatch, "feature dimension mismatch");
  }
  // Averaging both orders makes the result symmetric bit for bit.
  return 0.5 * (xi.dot(model.kernel() * xj) + xj.dot(model.kernel() * xi));
}

double gfk_distance(const GfkModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& xj) {
  if (xi.size() != model.dim() || xj.size() != model.dim()) {
    fail(ErrorCode::DimensionMismatch, "feature dimension mismatch");
  }
  const Eigen::VectorXd diff = xi - xj;
  return std::sqrt(std::max(0.0, diff.dot(model.kernel() * diff)));
}

Eigen::MatrixXd PcaTransfer::project(const Eigen::MatrixXd& rows) const {
  require(rows.cols() == basis.rows(), ErrorCode::DimensionMismatch, "feature dimension mismatch");
  return (rows.rowwise() - mean) * basis;
}

PcaTransfer pca_transfer(const FeatureSet& source, const FeatureSet& target, int d) {
  if (source.dim() != target.dim()) {
    fail(ErrorCode::DimensionMismatch, "source and target descriptors differ in length");
  }
  FeatureSet both;
  both.vectors.resize(source.size() + target.size(), source.dim());
  both.vectors << source.vectors, target.vectors;
  PcaTransfer out;
  out.mean = both.vectors.colwise().mean();
  out.basis = pca_basis(both, d);
  out.source = out.project(source.vectors);
  out.target = out.project(target.vectors);
  return out;
}

}  // namespace vitac
