#pragma once

#include "vitac/adapt.hpp"
#include "vitac/cloud.hpp"
#include "vitac/descriptors.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vitac {

enum class MetricKind { euclidean, gfk };

struct MetricSpec {
  MetricKind kind = MetricKind::euclidean;
  std::shared_ptr<const GfkModel> model;  // required for gfk
};

enum class KernelKind { linear, rbf, gfk_linear, gfk_rbf };

const char* to_string(KernelKind kind) noexcept;
KernelKind parse_kernel_kind(const std::string& text);

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  /// RBF width; 0 selects 1 / (mean squared distance to the training mean),
  /// measured in the kernel's own metric.
  double gamma = 0.0;
  std::shared_ptr<const GfkModel> model;  // required for gfk kinds
};

/// How the stored descriptors were produced, kept with the model so a query
/// cloud is processed exactly like the training clouds.
struct Preprocessing {
  bool equalize = true;
  EqualizationParams equalization;
  DescriptorKind descriptor = DescriptorKind::clue;
  int esf_samples = kDefaultEsfSamples;
  std::uint64_t seed = 0;
  int normal_neighbors = kDefaultNormalNeighbors;
};

/// One soft-margin machine separating `positive` (+1) from `negative` (-1).
/// `support` rows live in the kernel's feature space (the GFK embedding for
/// gfk kinds); decision(x) = sum_i coef_i k(s_i, x) - rho.
struct BinaryMachine {
  int positive = 0;
  int negative = 0;
  Eigen::MatrixXd support;
  Eigen::VectorXd coef;   // alpha_i * y_i
  Eigen::VectorXd alpha;  // in [0, C]
  double rho = 0.0;
  int iterations = 0;
};

enum class Algorithm { knn, svm };

struct TrainedModel {
  Algorithm algorithm = Algorithm::knn;
  std::vector<int> classes;  // ascending

  // knn
  Eigen::MatrixXd vectors;  // N x D, as given
  std::vector<int> labels;
  int k = 1;
  MetricSpec metric;
  Eigen::MatrixXd mapped;  // N x r rows in the metric's Euclidean space

  // svm
  KernelSpec kernel;
  double C = 10.0;
  double tol = 1e-3;
  std::vector<BinaryMachine> machines;  // pairs (a, b), a < b, lexicographic

  Preprocessing preprocessing;

  Eigen::Index dim() const noexcept;
};

/// Stores the labeled set (any number of classes). Throws InvalidArgument for
/// k < 1 or an unlabeled/empty set.
TrainedModel knn_fit(const FeatureSet& data, int k, const MetricSpec& metric = {});
int knn_classify(const TrainedModel& model, const Eigen::VectorXd& query);

TrainedModel svm_train(const FeatureSet& data, const KernelSpec& kernel, double C = 10.0,
                       double tol = 1e-3);
/// One value per machine, in `model.machines` order; positive favors `positive`.
std::vector<double> svm_decision_values(const TrainedModel& model, const Eigen::VectorXd& query);
int svm_predict(const TrainedModel& model, const Eigen::VectorXd& query);

/// Dispatches on the algorithm.
int predict(const TrainedModel& model, const Eigen::VectorXd& query);

/// Rows = predicted class, columns = true class, both in `classes` order.
struct ConfusionMatrix {
  std::vector<int> classes;
  Eigen::MatrixXi counts;
  Eigen::MatrixXd fractions;  // each column sums to 1 when its class occurs
};

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::vector<int> predictions;
};

Evaluation evaluate(const TrainedModel& model, const FeatureSet& test);
/// The confusion bookkeeping alone, for precomputed predictions.
Evaluation score(const std::vector<int>& truth, const std::vector<int>& predictions,
                 std::vector<int> classes = {});

using Trainer = std::function<TrainedModel(const FeatureSet&)>;

struct CrossValidation {
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracy;
  std::vector<int> fold_of;  // per example
};

/// Stratified folds: each class is shuffled with `seed` and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed);
CrossValidation kfold_cv(const FeatureSet& data, int k, const Trainer& trainer,
                         std::uint64_t seed = 0);

}  // namespace vitac
