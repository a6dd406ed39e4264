#pragma once

#include "vitac/cloud.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace vitac {

enum class DescriptorKind { esf, shot, concat, clue };

inline constexpr int kEsfBins = 64;
inline constexpr int kEsfHistograms = 10;
inline constexpr int kEsfLength = kEsfBins * kEsfHistograms;  // 640
inline constexpr int kShotDivisions = 32;
inline constexpr int kShotBins = 11;
inline constexpr int kShotLength = kShotDivisions * kShotBins;  // 352
inline constexpr int kConcatLength = kShotLength + kEsfLength;  // 992
inline constexpr int kClueLength = kEsfLength;                  // 640

inline constexpr int kDefaultEsfSamples = 20000;
inline constexpr int kDefaultNormalNeighbors = 10;

int descriptor_length(DescriptorKind kind) noexcept;
const char* to_string(DescriptorKind kind) noexcept;
DescriptorKind parse_descriptor_kind(const std::string& text);

struct Descriptor {
  DescriptorKind kind = DescriptorKind::esf;
  Eigen::VectorXd values;
};

/// One unit normal per cloud point.
struct NormalField {
  std::vector<Eigen::Vector3d> normals;
};

/// Least-variance direction of each point's (k+1)-nearest neighborhood (the
/// point itself plus k others), oriented toward the cloud's sensor origin or,
/// without one, toward +z. Throws TooFewPoints when k < 3 or size < k + 1.
NormalField estimate_normals(const PointCloud& cloud, int k = kDefaultNormalNeighbors);

/// Ensemble of shape functions: ten 64-bin histograms (D2 in/out/mixed, D2
/// in-ratio, A3 in/out/mixed, D3 in/out/mixed) over seeded random triplets,
/// each histogram normalized to sum 1. The 64^3 occupancy grid lives in the
/// cloud's principal-axes frame, centered at the centroid, so the result is
/// invariant to rigid motions up to floating-point rounding.
Descriptor compute_esf(const PointCloud& cloud, int n_samples = kDefaultEsfSamples,
                       std::uint64_t seed = 0);

struct ShotFrame {
  Point center = Point::Zero();
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();  // columns x, y, z
  double support_radius = 0.0;
  bool degenerate = false;  // world axes were substituted
};

struct ShotResult {
  Descriptor descriptor;
  ShotFrame frame;
};

/// Global SHOT centered at the centroid with the enclosing radius as support.
ShotResult compute_shot_with_frame(const PointCloud& cloud, const NormalField& normals);
Descriptor compute_shot(const PointCloud& cloud, const NormalField& normals);

/// [shot; esf], length 992.
Descriptor concat_descriptor(const Descriptor& shot, const Descriptor& esf);

/// Intermediate quantities of the two-column SVD fusion.
struct SvdFusion {
  Eigen::MatrixX2d stacked;   // [esf, shot zero-padded to 640]
  Eigen::MatrixX2d centered;  // column means removed
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  Eigen::VectorXd u1;
  Eigen::Vector2d v1 = Eigen::Vector2d::Zero();
};

SvdFusion fuse_svd(const Descriptor& shot, const Descriptor& esf);

/// sigma1 * u1 of the centered [esf, padded shot] matrix, signed so that
/// u1 . centered_esf >= 0 (exact zero: first nonzero entry positive).
Descriptor compute_clue(const Descriptor& shot, const Descriptor& esf);

}  // namespace vitac
