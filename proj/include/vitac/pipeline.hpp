#pragma once

#include "vitac/adapt.hpp"
#include "vitac/classify.hpp"
#include "vitac/cloud.hpp"
#include "vitac/descriptors.hpp"
#include "vitac/synth.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vitac {

enum class Adaptation { none, pca, gfk };

const char* to_string(Adaptation a) noexcept;
Adaptation parse_adaptation(const std::string& text);

struct ClassifierSpec {
  Algorithm algorithm = Algorithm::knn;
  int k = 5;
  KernelKind kernel = KernelKind::rbf;  // linear or rbf; GFK variants are chosen by the adaptation
  double C = 10.0;
  double gamma = 0.0;  // 0 = automatic
  double tol = 1e-3;

  /// "1nn", "5nn", "svm_linear", "svm_rbf".
  std::string name() const;
  static ClassifierSpec parse(const std::string& name);
};

struct PipelineConfig {
  Preprocessing preprocessing;
  Adaptation adaptation = Adaptation::none;
  int subspace_dim = 27;
  bool standardize = false;
  ClassifierSpec classifier;

  void validate() const;
};

std::string dump_config(const PipelineConfig& config);
PipelineConfig parse_config(std::string_view json_text);
/// `path` empty: $VITAC_CONFIG if set, else built-in defaults.
PipelineConfig load_config(const std::filesystem::path& path = {});

// ---------------------------------------------------------------------------
// Datasets

struct GenerationParams {
  int classes = 15;
  int visual_per_class = 40;
  int tactile_per_class = 5;
  int poses = 2;  // visual views are split evenly across this many placements
  std::uint64_t seed = 1;
  VisualSpec visual;
  SensorSpec sensor;
  double grid_pitch = 0.025;
};

struct ManifestEntry {
  std::string file;  // relative to the manifest directory
  Modality modality = Modality::visual;
  int class_id = 0;
  int pose = 0;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  GenerationParams generation;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> select(Modality modality) const;
};

inline constexpr const char* kManifestFile = "manifest.json";

DatasetManifest generate_dataset(const std::filesystem::path& dir, const GenerationParams& params);
void save_manifest(const DatasetManifest& manifest);
/// Accepts the manifest file or its directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Counts every cloud file read and every label handed to a caller.
struct ReadAudit {
  std::size_t visual_reads = 0;
  std::size_t tactile_reads = 0;
  std::size_t visual_labels = 0;
  std::size_t tactile_labels = 0;
  std::size_t labels_stripped = 0;
};

enum class LabelPolicy { keep, strip };

class CloudStore {
 public:
  explicit CloudStore(DatasetManifest manifest);
  const DatasetManifest& manifest() const noexcept { return manifest_; }
  PointCloud load(const ManifestEntry& entry, LabelPolicy policy);
  ReadAudit audit() const noexcept;

 private:
  DatasetManifest manifest_;
  std::atomic<std::size_t> visual_reads_{0}, tactile_reads_{0};
  std::atomic<std::size_t> visual_labels_{0}, tactile_labels_{0}, stripped_{0};
};

// ---------------------------------------------------------------------------
// Descriptors for the pipeline

struct DescriptorPair {
  Descriptor shot;
  Descriptor esf;
};

/// Optional equalization, then SHOT and ESF.
DescriptorPair describe_parts(const PointCloud& cloud, const Preprocessing& prep);
Descriptor combine(const DescriptorPair& parts, DescriptorKind kind);
Descriptor describe(const PointCloud& cloud, const Preprocessing& prep);

// ---------------------------------------------------------------------------
// Models

/// Everything needed to classify a descriptor: optional standardization,
/// optional PCA projection or GFK metric, and the classifier.
struct PipelineModel {
  PipelineConfig config;
  Eigen::RowVectorXd shift;  // standardization, empty when off
  Eigen::RowVectorXd scale;
  std::optional<PcaTransfer> pca;  // mean and basis only
  std::shared_ptr<const GfkModel> gfk;
  TrainedModel classifier;

  Eigen::MatrixXd features(const Eigen::MatrixXd& descriptors) const;
  int classify(const Eigen::VectorXd& descriptor) const;
};

/// Fits standardization/adaptation and the classifier on descriptor rows.
/// `target` rows are used only by the adaptation and carry no labels.
PipelineModel fit_model(const FeatureSet& source, const FeatureSet* target,
                        const PipelineConfig& config);

/// Labels come from each cloud's `label` (an integer class id).
PipelineModel cmr_train(const std::vector<PointCloud>& source, const PipelineConfig& config);
/// Target labels are dropped before use; a warning is issued if any were present.
PipelineModel tlcmr_train(const std::vector<PointCloud>& source, std::vector<PointCloud> target,
                          const PipelineConfig& config);

/// Manifest-driven forms. cmr_train touches visual files only.
PipelineModel cmr_train(CloudStore& store, const PipelineConfig& config);
PipelineModel tlcmr_train(CloudStore& store, const PipelineConfig& config);

int recognize(const PipelineModel& model, const PointCloud& cloud);

std::string dump_model(const PipelineModel& model);
PipelineModel parse_model(std::string_view json_text);
void save_model(const PipelineModel& model, const std::filesystem::path& path);
PipelineModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkOptions {
  PipelineConfig base;  // equalization, ESF samples, seed, d, standardization
  std::vector<ClassifierSpec> classifiers;  // empty: 1nn, 3nn, 5nn, svm_linear, svm_rbf
  bool cross_modal = true;
  bool adaptation = true;
  bool monomodal = true;
  int folds = 10;
};

struct BenchmarkRow {
  std::string config_id;
  std::string table;     // "cross_modal", "adaptation" or "monomodal"
  std::string protocol;  // "visual_to_tactile" or "visual_10fold"
  bool preprocess = true;
  DescriptorKind descriptor = DescriptorKind::clue;
  Adaptation adaptation = Adaptation::none;
  std::string classifier;
  std::optional<double> accuracy;  // empty when the config failed
  std::string status = "ok";
  double seconds = 0.0;
  ConfusionMatrix confusion;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::string resolved_config;  // JSON

  const BenchmarkRow* find(const std::string& config_id) const;
  /// Best accuracy over classifiers for one (table, preprocess, descriptor, adaptation).
  std::optional<double> best(const std::string& table, bool preprocess, DescriptorKind descriptor,
                             Adaptation adaptation) const;
};

std::string config_id(const std::string& table, bool preprocess, DescriptorKind descriptor,
                      Adaptation adaptation, const std::string& classifier);

BenchmarkReport run_benchmark(CloudStore& store, const BenchmarkOptions& options);

/// results.csv (deterministic columns only), timings.csv, config.json and
/// confusion/<config_id>.csv (rows = predicted, columns = true class).
void write_report(const BenchmarkReport& report, const std::filesystem::path& dir);
std::string results_csv(const BenchmarkReport& report);
std::string timings_csv(const BenchmarkReport& report);
std::string confusion_csv(const ConfusionMatrix& confusion);

/// Human-readable accuracy grids from a results.csv text.
std::string render_tables(std::string_view results_csv_text);

}  // namespace vitac
