#pragma once

#include <Eigen/Core>

#include <vector>

namespace vitac {

enum class Domain { source, target };

/// N x D descriptor matrix, one row per example. Labels are optional and, for
/// the target domain, never consulted by the adaptation code.
struct FeatureSet {
  Eigen::MatrixXd vectors;
  Domain domain = Domain::source;
  std::vector<int> labels;

  Eigen::Index size() const noexcept { return vectors.rows(); }
  Eigen::Index dim() const noexcept { return vectors.cols(); }
  bool labeled() const noexcept {
    return !labels.empty() && static_cast<Eigen::Index>(labels.size()) == vectors.rows();
  }
};

/// Top-d principal directions of the mean-centered rows, eigenvalue
/// descending, each column signed so its largest-magnitude entry is positive.
/// Throws RankDeficient when d exceeds the rank of the centered data.
Eigen::MatrixXd pca_basis(const FeatureSet& set, int d);

/// Orthonormal basis (D x (D - d)) of the complement of an orthonormal D x d basis.
Eigen::MatrixXd orthogonal_complement(const Eigen::MatrixXd& basis);

struct SubspacePair {
  Eigen::MatrixXd source_basis;        // X_S, D x d
  Eigen::MatrixXd target_basis;        // X_T, D x d
  Eigen::MatrixXd source_complement;   // R_S, D x (D - d)
  int dim = 0;
};

struct PrincipalAngles {
  Eigen::VectorXd theta;  // ascending, radians in [0, pi/2]
  Eigen::MatrixXd u1;     // d x d
  Eigen::MatrixXd u2;     // (D - d) x d, orthonormal columns
  Eigen::MatrixXd v;      // d x d
};

/// X_S^T X_T = U1 cos(theta) V^T and R_S^T X_T = -U2 sin(theta) V^T.
PrincipalAngles principal_angles(const Eigen::MatrixXd& source_basis,
                                 const Eigen::MatrixXd& target_basis);
PrincipalAngles principal_angles(const Eigen::MatrixXd& source_basis,
                                 const Eigen::MatrixXd& target_basis,
                                 const Eigen::MatrixXd& source_complement);

/// Geodesic flow kernel between two subspaces. `kernel` is the D x D matrix G
/// (xi^T G xj is the similarity); `factor` is a D x r matrix W with G = W W^T,
/// used to evaluate G-distances in r dimensions.
class GfkModel {
 public:
  GfkModel() = default;

  static GfkModel from_bases(const Eigen::MatrixXd& source_basis,
                             const Eigen::MatrixXd& target_basis);
  /// Wraps an arbitrary symmetric PSD matrix (no subspace data); used for
  /// fixtures such as G = I or rescaled kernels.
  static GfkModel from_kernel_matrix(const Eigen::MatrixXd& kernel);

  Eigen::Index dim() const noexcept { return kernel_.rows(); }
  bool has_subspaces() const noexcept { return subspaces_.dim > 0; }

  const SubspacePair& subspaces() const noexcept { return subspaces_; }
  const Eigen::VectorXd& theta() const noexcept { return angles_.theta; }
  const PrincipalAngles& angles() const noexcept { return angles_; }
  const Eigen::MatrixXd& kernel() const noexcept { return kernel_; }
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }

  /// W^T x for each row of `rows` (N x D -> N x r).
  Eigen::MatrixXd embed(const Eigen::MatrixXd& rows) const;
  Eigen::VectorXd embed(const Eigen::VectorXd& x) const;

 private:
  SubspacePair subspaces_;
  PrincipalAngles angles_;
  Eigen::MatrixXd kernel_;
  Eigen::MatrixXd factor_;
};

/// Point of the geodesic from span(X_S) (t = 0) to span(X_T) (t = 1).
Eigen::MatrixXd geodesic_point(const GfkModel& model, double t);

/// Unsupervised: target labels, if any, are ignored.
GfkModel gfk_fit(const FeatureSet& source, const FeatureSet& target, int d);

double gfk_similarity(const GfkModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& xj);
double gfk_distance(const GfkModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& xj);

/// The (lambda1, lambda2, lambda3) block weights for one principal angle.
Eigen::Vector3d gfk_block_weights(double theta);

/// One PCA subspace fitted on source and target together.
struct PcaTransfer {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd basis;  // D x d
  Eigen::MatrixXd source;  // N_S x d
  Eigen::MatrixXd target;  // N_T x d

  Eigen::MatrixXd project(const Eigen::MatrixXd& rows) const;
};

PcaTransfer pca_transfer(const FeatureSet& source, const FeatureSet& target, int d);

}  // namespace vitac
