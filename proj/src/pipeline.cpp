#include "vitac/pipeline.hpp"

#include "vitac/equalize.hpp"
#include "vitac/error.hpp"
#include "vitac/io.hpp"
#include "vitac/log.hpp"
#include "vitac/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace vitac {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix(splitmix(splitmix(seed ^ splitmix(a)) ^ b) ^ c);
}

int label_of(const PointCloud& cloud) {
  if (!cloud.label) fail(ErrorCode::InvalidArgument, "training cloud has no label");
  try {
    std::size_t used = 0;
    const int v = std::stoi(*cloud.label, &used);
    if (used != cloud.label->size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::Parse, "label '" + *cloud.label + "' is not an integer class id");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

const char* to_string(Adaptation a) noexcept {
  switch (a) {
    case Adaptation::none: return "none";
    case Adaptation::pca: return "pca";
    case Adaptation::gfk: return "gfk";
  }
  return "?";
}

Adaptation parse_adaptation(const std::string& text) {
  const std::string s = lower(text);
  if (s == "none") return Adaptation::none;
  if (s == "pca") return Adaptation::pca;
  if (s == "gfk") return Adaptation::gfk;
  fail(ErrorCode::Parse, "unknown adaptation '" + text + "'");
}

std::string ClassifierSpec::name() const {
  if (algorithm == Algorithm::knn) return std::to_string(k) + "nn";
  return kernel == KernelKind::linear ? "svm_linear" : "svm_rbf";
}

ClassifierSpec ClassifierSpec::parse(const std::string& name) {
  const std::string s = lower(name);
  ClassifierSpec c;
  if (s == "svm" || s == "svm_rbf") {
    c.algorithm = Algorithm::svm;
    c.kernel = KernelKind::rbf;
    return c;
  }
  if (s == "svm_linear") {
    c.algorithm = Algorithm::svm;
    c.kernel = KernelKind::linear;
    return c;
  }
  if (s.size() > 2 && s.ends_with("nn")) {
    try {
      std::size_t used = 0;
      c.k = std::stoi(s.substr(0, s.size() - 2), &used);
      if (used == s.size() - 2 && c.k >= 1) return c;
    } catch (const std::exception&) {
    }
  }
  fail(ErrorCode::Parse, "unknown classifier '" + name + "'");
}

void PipelineConfig::validate() const {
  preprocessing.equalization.validate();
  require(preprocessing.esf_samples > 0, ErrorCode::InvalidArgument, "esf_samples must be > 0");
  require(preprocessing.normal_neighbors >= 3, ErrorCode::InvalidArgument, "normal_neighbors must be >= 3");
  require(subspace_dim >= 1, ErrorCode::InvalidArgument, "subspace_dim must be >= 1");
  require(subspace_dim < descriptor_length(preprocessing.descriptor), ErrorCode::InvalidArgument,
          "subspace_dim must be below the descriptor length");
  require(classifier.k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
  require(classifier.C > 0, ErrorCode::InvalidArgument, "C must be > 0");
  require(classifier.gamma >= 0, ErrorCode::InvalidArgument, "gamma must be >= 0");
  require(classifier.tol > 0, ErrorCode::InvalidArgument, "tol must be > 0");
  require(classifier.kernel == KernelKind::linear || classifier.kernel == KernelKind::rbf,
          ErrorCode::InvalidArgument, "classifier kernel must be linear or rbf");
}

namespace {

json config_json(const PipelineConfig& c) {
  const auto& p = c.preprocessing;
  return json{
      {"preprocessing",
       {{"equalize", p.equalize},
        {"upsample_step", p.equalization.upsample_step},
        {"search_radius", p.equalization.search_radius},
        {"poly_degree", p.equalization.poly_degree},
        {"voxel_edge", p.equalization.voxel_edge},
        {"descriptor", to_string(p.descriptor)},
        {"esf_samples", p.esf_samples},
        {"normal_neighbors", p.normal_neighbors},
        {"seed", p.seed}}},
      {"adaptation",
       {{"method", to_string(c.adaptation)},
        {"subspace_dim", c.subspace_dim},
        {"standardize", c.standardize}}},
      {"classifier",
       {{"algorithm", c.classifier.algorithm == Algorithm::knn ? "knn" : "svm"},
        {"k", c.classifier.k},
        {"kernel", to_string(c.classifier.kernel)},
        {"C", c.classifier.C},
        {"gamma", c.classifier.gamma},
        {"tol", c.classifier.tol}}},
  };
}

template <class T>
void take(const json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj.at(key).get<T>();
}

PipelineConfig config_from(const json& j) {
  PipelineConfig c;
  if (j.contains("preprocessing")) {
    const json& p = j.at("preprocessing");
    auto& pp = c.preprocessing;
    take(p, "equalize", pp.equalize);
    take(p, "upsample_step", pp.equalization.upsample_step);
    take(p, "search_radius", pp.equalization.search_radius);
    take(p, "poly_degree", pp.equalization.poly_degree);
    take(p, "voxel_edge", pp.equalization.voxel_edge);
    if (p.contains("descriptor")) pp.descriptor = parse_descriptor_kind(p.at("descriptor").get<std::string>());
    take(p, "esf_samples", pp.esf_samples);
    take(p, "normal_neighbors", pp.normal_neighbors);
    take(p, "seed", pp.seed);
  }
  if (j.contains("adaptation")) {
    const json& a = j.at("adaptation");
    if (a.contains("method")) c.adaptation = parse_adaptation(a.at("method").get<std::string>());
    take(a, "subspace_dim", c.subspace_dim);
    take(a, "standardize", c.standardize);
  }
  if (j.contains("classifier")) {
    const json& k = j.at("classifier");
    if (k.contains("name")) c.classifier = ClassifierSpec::parse(k.at("name").get<std::string>());
    if (k.contains("algorithm")) {
      const std::string alg = lower(k.at("algorithm").get<std::string>());
      if (alg == "knn") c.classifier.algorithm = Algorithm::knn;
      else if (alg == "svm") c.classifier.algorithm = Algorithm::svm;
      else fail(ErrorCode::Parse, "unknown algorithm '" + alg + "'");
    }
    take(k, "k", c.classifier.k);
    if (k.contains("kernel")) c.classifier.kernel = parse_kernel_kind(k.at("kernel").get<std::string>());
    take(k, "C", c.classifier.C);
    take(k, "gamma", c.classifier.gamma);
    take(k, "tol", c.classifier.tol);
  }
  c.validate();
  return c;
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string dump_config(const PipelineConfig& config) { return config_json(config).dump(2) + "\n"; }

PipelineConfig parse_config(std::string_view json_text) {
  try {
    return config_from(parse_json(json_text, "config"));
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("config: ") + e.what());
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  if (p.empty()) {
    const char* env = std::getenv("VITAC_CONFIG");
    if (env == nullptr || *env == '\0') return PipelineConfig{};
    p = env;
  }
  return parse_config(read_text(p));
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestEntry> DatasetManifest::select(Modality modality) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.modality == modality) out.push_back(e);
  return out;
}

namespace {

json generation_json(const GenerationParams& g) {
  return json{{"classes", g.classes},
              {"visual_per_class", g.visual_per_class},
              {"tactile_per_class", g.tactile_per_class},
              {"poses", g.poses},
              {"seed", g.seed},
              {"visual",
               {{"density", g.visual.density},
                {"noise_sigma", g.visual.noise_sigma},
                {"sensor_height", g.visual.sensor_height}}},
              {"sensor",
               {{"modules_per_side", g.sensor.modules_per_side},
                {"array_edge", g.sensor.array_edge},
                {"force_threshold", g.sensor.force_threshold},
                {"contact_stiffness", g.sensor.contact_stiffness},
                {"press_depth", g.sensor.press_depth},
                {"noise_sigma", g.sensor.noise_sigma}}},
              {"grid_pitch", g.grid_pitch}};
}

GenerationParams generation_from(const json& j) {
  GenerationParams g;
  take(j, "classes", g.classes);
  take(j, "visual_per_class", g.visual_per_class);
  take(j, "tactile_per_class", g.tactile_per_class);
  take(j, "poses", g.poses);
  take(j, "seed", g.seed);
  take(j, "grid_pitch", g.grid_pitch);
  if (j.contains("visual")) {
    const json& v = j.at("visual");
    take(v, "density", g.visual.density);
    take(v, "noise_sigma", g.visual.noise_sigma);
    take(v, "sensor_height", g.visual.sensor_height);
  }
  if (j.contains("sensor")) {
    const json& s = j.at("sensor");
    take(s, "modules_per_side", g.sensor.modules_per_side);
    take(s, "array_edge", g.sensor.array_edge);
    take(s, "force_threshold", g.sensor.force_threshold);
    take(s, "contact_stiffness", g.sensor.contact_stiffness);
    take(s, "press_depth", g.sensor.press_depth);
    take(s, "noise_sigma", g.sensor.noise_sigma);
  }
  return g;
}

std::string two_digits(int v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

}  // namespace

DatasetManifest generate_dataset(const std::filesystem::path& dir, const GenerationParams& params) {
  require(params.classes >= 1 && params.classes <= catalog_size(), ErrorCode::InvalidArgument,
          "class count outside the catalog");
  require(params.visual_per_class >= 1 && params.tactile_per_class >= 1, ErrorCode::InvalidArgument,
          "need at least one cloud per class and modality");
  require(params.poses >= 1, ErrorCode::InvalidArgument, "need at least one pose");
  params.sensor.validate();

  DatasetManifest m;
  m.root = dir;
  m.generation = params;
  for (int c = 0; c < params.classes; ++c) m.class_names.push_back(catalog_name(c));

  for (int c = 0; c < params.classes; ++c) {
    for (int i = 0; i < params.visual_per_class; ++i) {
      const int pose = i * params.poses / params.visual_per_class;
      m.entries.push_back({"visual/c" + two_digits(c) + "_v" + two_digits(i) + ".txt", Modality::visual, c,
                           pose, derive(params.seed, static_cast<std::uint64_t>(c), 2, static_cast<std::uint64_t>(i))});
    }
  }
  for (int c = 0; c < params.classes; ++c) {
    for (int i = 0; i < params.tactile_per_class; ++i) {
      m.entries.push_back({"tactile/c" + two_digits(c) + "_t" + two_digits(i) + ".txt", Modality::tactile, c,
                           i % params.poses,
                           derive(params.seed, static_cast<std::uint64_t>(c), 4, static_cast<std::uint64_t>(i))});
    }
  }

  parallel_for(m.entries.size(), [&](std::size_t n) {
    const ManifestEntry& e = m.entries[n];
    const auto cls = static_cast<std::uint64_t>(e.class_id);
    PointCloud cloud;
    if (e.modality == Modality::visual) {
      // One physical placement per pose; each view sees it from a new azimuth.
      const ObjectModel placed = make_object(e.class_id, derive(params.seed, cls, 0, static_cast<std::uint64_t>(e.pose)));
      std::mt19937_64 rng(derive(e.seed, 1, 0, 0));
      PlanarPose view;
      view.angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      cloud = sample_visual(placed, view, params.visual, e.seed);
    } else {
      const ObjectModel placed = make_object(e.class_id, derive(e.seed, 3, 0, 0));
      cloud = sample_tactile(placed, params.sensor, make_grid(placed, params.grid_pitch), e.seed);
    }
    write_cloud(dir / e.file, cloud);
  });
  save_manifest(m);
  return m;
}

void save_manifest(const DatasetManifest& m) {
  json classes = json::array();
  for (std::size_t i = 0; i < m.class_names.size(); ++i) classes.push_back({{"id", i}, {"name", m.class_names[i]}});
  json entries = json::array();
  std::size_t nv = 0, nt = 0;
  for (const auto& e : m.entries) {
    (e.modality == Modality::visual ? nv : nt)++;
    entries.push_back({{"file", e.file},
                       {"modality", to_string(e.modality)},
                       {"class", e.class_id},
                       {"pose", e.pose},
                       {"seed", e.seed}});
  }
  const json doc{{"format", "vitac-manifest/1"},
                 {"classes", classes},
                 {"counts", {{"visual", nv}, {"tactile", nt}}},
                 {"generation", generation_json(m.generation)},
                 {"entries", entries}};
  write_text_atomic(m.root / kManifestFile, doc.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const std::filesystem::path file =
      std::filesystem::is_directory(path) ? path / kManifestFile : path;
  const json doc = parse_json(read_text(file), file.string().c_str());
  DatasetManifest m;
  m.root = file.parent_path();
  try {
    for (const auto& c : doc.at("classes")) {
      const auto id = c.at("id").get<std::size_t>();
      if (m.class_names.size() <= id) m.class_names.resize(id + 1);
      m.class_names[id] = c.at("name").get<std::string>();
    }
    if (doc.contains("generation")) m.generation = generation_from(doc.at("generation"));
    for (const auto& e : doc.at("entries")) {
      ManifestEntry me;
      me.file = e.at("file").get<std::string>();
      me.modality = parse_modality(e.at("modality").get<std::string>());
      me.class_id = e.at("class").get<int>();
      take(e, "pose", me.pose);
      take(e, "seed", me.seed);
      if (me.class_id < 0 || static_cast<std::size_t>(me.class_id) >= m.class_names.size()) {
        fail(ErrorCode::UnknownClass, "manifest entry " + me.file + " has unknown class");
      }
      if (!std::filesystem::exists(m.root / me.file)) {
        fail(ErrorCode::Io, "manifest references missing file " + me.file);
      }
      m.entries.push_back(std::move(me));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, file.string() + ": " + e.what());
  }
  return m;
}

CloudStore::CloudStore(DatasetManifest manifest) : manifest_(std::move(manifest)) {}

PointCloud CloudStore::load(const ManifestEntry& entry, LabelPolicy policy) {
  PointCloud cloud = read_cloud(manifest_.root / entry.file);
  const bool tactile = entry.modality == Modality::tactile;
  ++(tactile ? tactile_reads_ : visual_reads_);
  if (cloud.modality != entry.modality) {
    fail(ErrorCode::Parse, entry.file + ": modality header disagrees with the manifest");
  }
  if (policy == LabelPolicy::strip) {
    if (cloud.label) ++stripped_;
    cloud.label.reset();
  } else {
    cloud.label = std::to_string(entry.class_id);
    ++(tactile ? tactile_labels_ : visual_labels_);
  }
  return cloud;
}

ReadAudit CloudStore::audit() const noexcept {
  return {visual_reads_.load(), tactile_reads_.load(), visual_labels_.load(), tactile_labels_.load(),
          stripped_.load()};
}

// ---------------------------------------------------------------------------
// Descriptors

DescriptorPair describe_parts(const PointCloud& cloud, const Preprocessing& prep) {
  if (cloud.empty()) fail(ErrorCode::EmptyCloud, "cannot describe an empty cloud");
  const PointCloud c = prep.equalize ? equalize(cloud, prep.equalization) : cloud;
  if (c.size() < 4) fail(ErrorCode::TooFewPoints, "need at least 4 points for descriptors");
  const int k = std::min<int>(prep.normal_neighbors, static_cast<int>(c.size()) - 1);
  DescriptorPair out;
  out.shot = compute_shot(c, estimate_normals(c, k));
  out.esf = compute_esf(c, prep.esf_samples, prep.seed);
  return out;
}

Descriptor combine(const DescriptorPair& parts, DescriptorKind kind) {
  switch (kind) {
    case DescriptorKind::esf: return parts.esf;
    case DescriptorKind::shot: return parts.shot;
    case DescriptorKind::concat: return concat_descriptor(parts.shot, parts.esf);
    case DescriptorKind::clue: return compute_clue(parts.shot, parts.esf);
  }
  fail(ErrorCode::InvalidArgument, "unknown descriptor kind");
}

Descriptor describe(const PointCloud& cloud, const Preprocessing& prep) {
  return combine(describe_parts(cloud, prep), prep.descriptor);
}

// ---------------------------------------------------------------------------
// Models

Eigen::MatrixXd PipelineModel::features(const Eigen::MatrixXd& descriptors) const {
  Eigen::MatrixXd x = descriptors;
  if (shift.size() > 0) x = ((x.rowwise() - shift).array().rowwise() / scale.array()).matrix();
  if (pca) x = pca->project(x);
  return x;
}

int PipelineModel::classify(const Eigen::VectorXd& descriptor) const {
  const Eigen::MatrixXd row = descriptor.transpose();
  return predict(classifier, features(row).row(0).transpose());
}

PipelineModel fit_model(const FeatureSet& source, const FeatureSet* target, const PipelineConfig& config) {
  config.validate();
  require(source.labeled(), ErrorCode::InvalidArgument, "source set needs labels");
  PipelineModel m;
  m.config = config;

  FeatureSet s;
  s.vectors = source.vectors;
  s.labels = source.labels;
  s.domain = Domain::source;
  FeatureSet t;  // labels never copied
  t.domain = Domain::target;
  const bool adapt = config.adaptation != Adaptation::none;
  if (adapt) {
    if (target == nullptr || target->size() == 0) {
      fail(ErrorCode::MissingTargetData, "adaptation needs unlabeled target descriptors");
    }
    if (target->dim() != source.dim()) fail(ErrorCode::DimensionMismatch, "source/target descriptor lengths differ");
    t.vectors = target->vectors;
  }

  if (config.standardize) {
    Eigen::MatrixXd both(s.size() + t.size(), s.dim());
    if (t.size() > 0) both << s.vectors, t.vectors; else both = s.vectors;
    m.shift = both.colwise().mean();
    m.scale = ((both.rowwise() - m.shift).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index i = 0; i < m.scale.size(); ++i)
      if (!(m.scale[i] > 1e-12)) m.scale[i] = 1.0;
    s.vectors = ((s.vectors.rowwise() - m.shift).array().rowwise() / m.scale.array()).matrix();
    if (t.size() > 0) t.vectors = ((t.vectors.rowwise() - m.shift).array().rowwise() / m.scale.array()).matrix();
  }

  if (config.adaptation == Adaptation::pca) {
    PcaTransfer p = pca_transfer(s, t, config.subspace_dim);
    s.vectors = std::move(p.source);
    p.source.resize(0, 0);
    p.target.resize(0, 0);
    m.pca = std::move(p);
  } else if (config.adaptation == Adaptation::gfk) {
    m.gfk = std::make_shared<const GfkModel>(gfk_fit(s, t, config.subspace_dim));
  }

  const ClassifierSpec& cs = config.classifier;
  if (cs.algorithm == Algorithm::knn) {
    MetricSpec metric;
    if (m.gfk) metric = {MetricKind::gfk, m.gfk};
    m.classifier = knn_fit(s, cs.k, metric);
  } else {
    KernelSpec kernel;
    kernel.gamma = cs.gamma;
    if (m.gfk) {
      kernel.kind = cs.kernel == KernelKind::linear ? KernelKind::gfk_linear : KernelKind::gfk_rbf;
      kernel.model = m.gfk;
    } else {
      kernel.kind = cs.kernel;
    }
    m.classifier = svm_train(s, kernel, cs.C, cs.tol);
  }
  m.classifier.preprocessing = config.preprocessing;
  return m;
}

namespace {

Eigen::MatrixXd describe_all(const std::vector<PointCloud>& clouds, const Preprocessing& prep) {
  const int len = descriptor_length(prep.descriptor);
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(clouds.size()), len);
  parallel_for(clouds.size(), [&](std::size_t i) {
    rows.row(static_cast<Eigen::Index>(i)) = describe(clouds[i], prep).values.transpose();
  });
  return rows;
}

FeatureSet labeled_features(const std::vector<PointCloud>& clouds, const Preprocessing& prep) {
  FeatureSet s;
  for (const auto& c : clouds) s.labels.push_back(label_of(c));
  std::set<int> distinct(s.labels.begin(), s.labels.end());
  if (distinct.size() < 2) fail(ErrorCode::SingleClass, "training needs at least two classes");
  s.vectors = describe_all(clouds, prep);
  return s;
}

}  // namespace

PipelineModel cmr_train(const std::vector<PointCloud>& source, const PipelineConfig& config) {
  PipelineConfig c = config;
  if (c.adaptation != Adaptation::none) {
    warn("cross-modal training ignores the configured adaptation");
    c.adaptation = Adaptation::none;
  }
  const FeatureSet s = labeled_features(source, c.preprocessing);
  return fit_model(s, nullptr, c);
}

PipelineModel tlcmr_train(const std::vector<PointCloud>& source, std::vector<PointCloud> target,
                          const PipelineConfig& config) {
  if (config.adaptation == Adaptation::none) {
    fail(ErrorCode::InvalidArgument, "transfer-learning training needs adaptation pca or gfk");
  }
  if (target.empty()) fail(ErrorCode::MissingTargetData, "no target clouds given");
  std::size_t labeled = 0;
  for (auto& t : target) {
    if (t.label) ++labeled;
    t.label.reset();
  }
  if (labeled > 0) warn(std::to_string(labeled) + " target cloud label(s) ignored");
  const FeatureSet s = labeled_features(source, config.preprocessing);
  FeatureSet t;
  t.domain = Domain::target;
  t.vectors = describe_all(target, config.preprocessing);
  return fit_model(s, &t, config);
}

namespace {

std::vector<PointCloud> load_all(CloudStore& store, Modality modality, LabelPolicy policy) {
  const auto entries = store.manifest().select(modality);
  std::vector<PointCloud> clouds(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) { clouds[i] = store.load(entries[i], policy); });
  return clouds;
}

}  // namespace

PipelineModel cmr_train(CloudStore& store, const PipelineConfig& config) {
  return cmr_train(load_all(store, Modality::visual, LabelPolicy::keep), config);
}

PipelineModel tlcmr_train(CloudStore& store, const PipelineConfig& config) {
  auto source = load_all(store, Modality::visual, LabelPolicy::keep);
  const std::size_t before = store.audit().labels_stripped;
  auto target = load_all(store, Modality::tactile, LabelPolicy::strip);
  const std::size_t stripped = store.audit().labels_stripped - before;
  if (stripped > 0) warn(std::to_string(stripped) + " target cloud label(s) ignored");
  return tlcmr_train(source, std::move(target), config);
}

int recognize(const PipelineModel& model, const PointCloud& cloud) {
  if (cloud.empty()) fail(ErrorCode::EmptyCloud, "cannot recognize an empty cloud");
  return model.classify(describe(cloud, model.config.preprocessing).values);
}

// ---------------------------------------------------------------------------
// Model files

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(std::move(r));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  Eigen::MatrixXd m(rows, cols);
  const json& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) fail(ErrorCode::Parse, "matrix row count mismatch");
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto r = data.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(r.size()) != cols) fail(ErrorCode::Parse, "matrix column count mismatch");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)];
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string dump_model(const PipelineModel& model) {
  json doc;
  doc["format"] = "vitac-model/1";
  doc["config"] = config_json(model.config);
  if (model.shift.size() > 0) {
    doc["standardization"] = {{"shift", vector_json(model.shift.transpose())},
                              {"scale", vector_json(model.scale.transpose())}};
  }
  if (model.pca) {
    doc["pca"] = {{"mean", vector_json(model.pca->mean.transpose())}, {"basis", matrix_json(model.pca->basis)}};
  }
  if (model.gfk) {
    doc["gfk"] = {{"source_basis", matrix_json(model.gfk->subspaces().source_basis)},
                  {"target_basis", matrix_json(model.gfk->subspaces().target_basis)}};
  }
  const TrainedModel& c = model.classifier;
  json cls;
  cls["classes"] = c.classes;
  if (c.algorithm == Algorithm::knn) {
    cls["algorithm"] = "knn";
    cls["k"] = c.k;
    cls["metric"] = c.metric.kind == MetricKind::gfk ? "gfk" : "euclidean";
    cls["vectors"] = matrix_json(c.vectors);
    cls["labels"] = c.labels;
  } else {
    cls["algorithm"] = "svm";
    cls["kernel"] = to_string(c.kernel.kind);
    cls["gamma"] = c.kernel.gamma;
    cls["C"] = c.C;
    cls["tol"] = c.tol;
    json machines = json::array();
    for (const auto& mach : c.machines) {
      machines.push_back({{"positive", mach.positive},
                          {"negative", mach.negative},
                          {"rho", mach.rho},
                          {"coef", vector_json(mach.coef)},
                          {"alpha", vector_json(mach.alpha)},
                          {"support", matrix_json(mach.support)}});
    }
    cls["machines"] = machines;
  }
  doc["classifier"] = cls;
  return doc.dump() + "\n";
}

PipelineModel parse_model(std::string_view json_text) {
  const json doc = parse_json(json_text, "model");
  try {
    PipelineModel m;
    m.config = config_from(doc.at("config"));
    if (doc.contains("standardization")) {
      m.shift = vector_from(doc.at("standardization").at("shift")).transpose();
      m.scale = vector_from(doc.at("standardization").at("scale")).transpose();
    }
    if (doc.contains("pca")) {
      PcaTransfer p;
      p.mean = vector_from(doc.at("pca").at("mean")).transpose();
      p.basis = matrix_from(doc.at("pca").at("basis"));
      m.pca = std::move(p);
    }
    if (doc.contains("gfk")) {
      m.gfk = std::make_shared<const GfkModel>(GfkModel::from_bases(
          matrix_from(doc.at("gfk").at("source_basis")), matrix_from(doc.at("gfk").at("target_basis"))));
    }
    const json& cls = doc.at("classifier");
    TrainedModel& c = m.classifier;
    c.classes = cls.at("classes").get<std::vector<int>>();
    c.preprocessing = m.config.preprocessing;
    if (cls.at("algorithm").get<std::string>() == "knn") {
      c.algorithm = Algorithm::knn;
      c.k = cls.at("k").get<int>();
      c.vectors = matrix_from(cls.at("vectors"));
      c.labels = cls.at("labels").get<std::vector<int>>();
      if (cls.at("metric").get<std::string>() == "gfk") {
        if (!m.gfk) fail(ErrorCode::Parse, "GFK metric without GFK bases");
        c.metric = {MetricKind::gfk, m.gfk};
        c.mapped = m.gfk->embed(c.vectors);
      } else {
        c.mapped = c.vectors;
      }
    } else {
      c.algorithm = Algorithm::svm;
      c.kernel.kind = parse_kernel_kind(cls.at("kernel").get<std::string>());
      c.kernel.gamma = cls.at("gamma").get<double>();
      if (c.kernel.kind == KernelKind::gfk_linear || c.kernel.kind == KernelKind::gfk_rbf) {
        if (!m.gfk) fail(ErrorCode::Parse, "GFK kernel without GFK bases");
        c.kernel.model = m.gfk;
      }
      c.C = cls.at("C").get<double>();
      c.tol = cls.at("tol").get<double>();
      for (const auto& mj : cls.at("machines")) {
        BinaryMachine mach;
        mach.positive = mj.at("positive").get<int>();
        mach.negative = mj.at("negative").get<int>();
        mach.rho = mj.at("rho").get<double>();
        mach.coef = vector_from(mj.at("coef"));
        mach.alpha = vector_from(mj.at("alpha"));
        mach.support = matrix_from(mj.at("support"));
        c.machines.push_back(std::move(mach));
      }
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("model: ") + e.what());
  }
}

void save_model(const PipelineModel& model, const std::filesystem::path& path) {
  write_text_atomic(path, dump_model(model));
}

PipelineModel load_model(const std::filesystem::path& path) { return parse_model(read_text(path)); }

// ---------------------------------------------------------------------------
// Benchmark

std::string config_id(const std::string& table, bool preprocess, DescriptorKind descriptor,
                      Adaptation adaptation, const std::string& classifier) {
  return table + "-" + (preprocess ? "pre" : "raw") + "-" + lower(to_string(descriptor)) + "-" +
         to_string(adaptation) + "-" + classifier;
}

const BenchmarkRow* BenchmarkReport::find(const std::string& id) const {
  for (const auto& r : rows)
    if (r.config_id == id) return &r;
  return nullptr;
}

std::optional<double> BenchmarkReport::best(const std::string& table, bool preprocess,
                                            DescriptorKind descriptor, Adaptation adaptation) const {
  std::optional<double> out;
  for (const auto& r : rows) {
    if (r.table != table || r.preprocess != preprocess || r.descriptor != descriptor ||
        r.adaptation != adaptation || !r.accuracy) {
      continue;
    }
    if (!out || *r.accuracy > *out) out = r.accuracy;
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<ClassifierSpec> default_classifiers() {
  return {ClassifierSpec::parse("1nn"), ClassifierSpec::parse("3nn"), ClassifierSpec::parse("5nn"),
          ClassifierSpec::parse("svm_linear"), ClassifierSpec::parse("svm_rbf")};
}

Eigen::MatrixXd stack(const std::vector<DescriptorPair>& parts, DescriptorKind kind) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(parts.size()), descriptor_length(kind));
  for (std::size_t i = 0; i < parts.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) = combine(parts[i], kind).values.transpose();
  return rows;
}

std::vector<int> predict_rows(const PipelineModel& model, const Eigen::MatrixXd& descriptors) {
  const Eigen::MatrixXd x = model.features(descriptors);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = predict(model.classifier, x.row(static_cast<Eigen::Index>(i)).transpose());
  });
  return out;
}

std::string sanitize(std::string s) {
  for (auto& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace

BenchmarkReport run_benchmark(CloudStore& store, const BenchmarkOptions& options) {
  options.base.validate();
  const std::vector<ClassifierSpec> classifiers =
      options.classifiers.empty() ? default_classifiers() : options.classifiers;

  const auto visual_entries = store.manifest().select(Modality::visual);
  const auto tactile_entries = store.manifest().select(Modality::tactile);
  require(!visual_entries.empty(), ErrorCode::InvalidArgument, "manifest has no visual clouds");
  const bool need_tactile = options.cross_modal || options.adaptation;
  require(!need_tactile || !tactile_entries.empty(), ErrorCode::MissingTargetData,
          "manifest has no tactile clouds");

  std::vector<PointCloud> visual(visual_entries.size()), tactile;
  std::vector<int> visual_labels, tactile_labels;
  for (const auto& e : visual_entries) visual_labels.push_back(e.class_id);
  parallel_for(visual.size(), [&](std::size_t i) { visual[i] = store.load(visual_entries[i], LabelPolicy::keep); });
  if (need_tactile) {
    // Ground truth for scoring comes from the manifest; the clouds themselves
    // enter the training path unlabeled.
    tactile.resize(tactile_entries.size());
    for (const auto& e : tactile_entries) tactile_labels.push_back(e.class_id);
    parallel_for(tactile.size(), [&](std::size_t i) { tactile[i] = store.load(tactile_entries[i], LabelPolicy::strip); });
  }
  std::vector<int> classes;
  for (std::size_t c = 0; c < store.manifest().class_names.size(); ++c) classes.push_back(static_cast<int>(c));

  BenchmarkReport report;
  {
    json resolved;
    resolved["base_config"] = config_json(options.base);
    json names = json::array();
    for (const auto& c : classifiers) names.push_back(c.name());
    resolved["classifiers"] = names;
    resolved["folds"] = options.folds;
    resolved["protocols"] = {{"cross_modal", options.cross_modal},
                             {"adaptation", options.adaptation},
                             {"monomodal", options.monomodal}};
    resolved["dataset"] = {{"visual", visual.size()},
                           {"tactile", tactile.size()},
                           {"classes", store.manifest().class_names},
                           {"generation", generation_json(store.manifest().generation)}};
    report.resolved_config = resolved.dump(2) + "\n";
  }

  // Descriptor cache per preprocessing state.
  struct Cache {
    std::vector<DescriptorPair> visual, tactile;
    double seconds = 0.0;
  };
  std::map<bool, Cache> cache;
  auto ensure = [&](bool pre) -> Cache& {
    auto it = cache.find(pre);
    if (it != cache.end()) return it->second;
    Cache c;
    Preprocessing prep = options.base.preprocessing;
    prep.equalize = pre;
    const auto t0 = Clock::now();
    c.visual.resize(visual.size());
    parallel_for(visual.size(), [&](std::size_t i) { c.visual[i] = describe_parts(visual[i], prep); });
    c.tactile.resize(tactile.size());
    parallel_for(tactile.size(), [&](std::size_t i) { c.tactile[i] = describe_parts(tactile[i], prep); });
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return cache.emplace(pre, std::move(c)).first->second;
  };

  auto make_config = [&](bool pre, DescriptorKind kind, Adaptation adaptation, const ClassifierSpec& cs) {
    PipelineConfig cfg = options.base;
    cfg.preprocessing.equalize = pre;
    cfg.preprocessing.descriptor = kind;
    cfg.adaptation = adaptation;
    cfg.classifier = cs;
    return cfg;
  };

  auto run_row = [&](BenchmarkRow row, const std::function<Evaluation()>& body) {
    const auto t0 = Clock::now();
    try {
      const Evaluation ev = body();
      row.accuracy = ev.accuracy;
      row.confusion = ev.confusion;
    } catch (const Error& e) {
      row.status = "error: " + sanitize(e.what());
      warn(row.config_id + " failed: " + e.what());
    }
    row.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report.rows.push_back(std::move(row));
  };

  const std::vector<DescriptorKind> all_kinds{DescriptorKind::shot, DescriptorKind::esf,
                                              DescriptorKind::concat, DescriptorKind::clue};

  if (options.cross_modal) {
    for (bool pre : {false, true}) {
      const Cache& c = ensure(pre);
      for (DescriptorKind kind : all_kinds) {
        FeatureSet s;
        s.vectors = stack(c.visual, kind);
        s.labels = visual_labels;
        const Eigen::MatrixXd t = stack(c.tactile, kind);
        for (const auto& cs : classifiers) {
          BenchmarkRow row;
          row.table = "cross_modal";
          row.protocol = "visual_to_tactile";
          row.preprocess = pre;
          row.descriptor = kind;
          row.adaptation = Adaptation::none;
          row.classifier = cs.name();
          row.config_id = config_id(row.table, pre, kind, Adaptation::none, row.classifier);
          run_row(std::move(row), [&] {
            const PipelineModel m = fit_model(s, nullptr, make_config(pre, kind, Adaptation::none, cs));
            return score(tactile_labels, predict_rows(m, t), classes);
          });
        }
      }
    }
  }

  if (options.adaptation) {
    const Cache& c = ensure(true);
    for (DescriptorKind kind : {DescriptorKind::shot, DescriptorKind::esf, DescriptorKind::clue}) {
      FeatureSet s;
      s.vectors = stack(c.visual, kind);
      s.labels = visual_labels;
      FeatureSet t;
      t.domain = Domain::target;
      t.vectors = stack(c.tactile, kind);
      for (Adaptation adaptation : {Adaptation::pca, Adaptation::gfk}) {
        for (const auto& cs : classifiers) {
          BenchmarkRow row;
          row.table = "adaptation";
          row.protocol = "visual_to_tactile";
          row.preprocess = true;
          row.descriptor = kind;
          row.adaptation = adaptation;
          row.classifier = cs.name();
          row.config_id = config_id(row.table, true, kind, adaptation, row.classifier);
          run_row(std::move(row), [&] {
            const PipelineModel m = fit_model(s, &t, make_config(true, kind, adaptation, cs));
            return score(tactile_labels, predict_rows(m, t.vectors), classes);
          });
        }
      }
    }
  }

  if (options.monomodal) {
    const Cache& c = ensure(true);
    const std::vector<int> folds = stratified_folds(visual_labels, options.folds, options.base.preprocessing.seed);
    for (DescriptorKind kind : all_kinds) {
      const Eigen::MatrixXd all = stack(c.visual, kind);
      for (const auto& cs : classifiers) {
        BenchmarkRow row;
        row.table = "monomodal";
        row.protocol = "visual_" + std::to_string(options.folds) + "fold";
        row.preprocess = true;
        row.descriptor = kind;
        row.adaptation = Adaptation::none;
        row.classifier = cs.name();
        row.config_id = config_id(row.table, true, kind, Adaptation::none, row.classifier);
        run_row(std::move(row), [&] {
          std::vector<int> truth, pred;
          double acc_sum = 0.0;
          for (int f = 0; f < options.folds; ++f) {
            std::vector<Eigen::Index> tr, te;
            for (std::size_t i = 0; i < folds.size(); ++i)
              (folds[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
            FeatureSet s;
            s.vectors = all(tr, Eigen::all);
            for (auto i : tr) s.labels.push_back(visual_labels[static_cast<std::size_t>(i)]);
            const PipelineModel m = fit_model(s, nullptr, make_config(true, kind, Adaptation::none, cs));
            const std::vector<int> p = predict_rows(m, all(te, Eigen::all));
            std::size_t correct = 0;
            for (std::size_t j = 0; j < te.size(); ++j) {
              const int want = visual_labels[static_cast<std::size_t>(te[j])];
              truth.push_back(want);
              pred.push_back(p[j]);
              if (p[j] == want) ++correct;
            }
            acc_sum += static_cast<double>(correct) / static_cast<double>(te.size());
          }
          Evaluation ev = score(truth, pred, classes);
          ev.accuracy = acc_sum / options.folds;
          return ev;
        });
      }
    }
  }

  for (const auto& [pre, c] : cache) {
    BenchmarkRow row;
    row.config_id = std::string("featurize-") + (pre ? "pre" : "raw");
    row.table = "featurize";
    row.seconds = c.seconds;
    row.status = "timing";
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string results_csv(const BenchmarkReport& report) {
  std::string out = "config_id,table,protocol,preprocess,descriptor,adaptation,classifier,accuracy,status\n";
  for (const auto& r : report.rows) {
    if (r.table == "featurize") continue;
    out += r.config_id + ',' + r.table + ',' + r.protocol + ',' + (r.preprocess ? "on" : "off") + ',' +
           lower(to_string(r.descriptor)) + ',' + to_string(r.adaptation) + ',' + r.classifier + ',' +
           (r.accuracy ? format_double(*r.accuracy) : std::string()) + ',' + r.status + '\n';
  }
  return out;
}

std::string timings_csv(const BenchmarkReport& report) {
  std::string out = "config_id,seconds\n";
  for (const auto& r : report.rows) out += r.config_id + ',' + format_double(r.seconds) + '\n';
  return out;
}

std::string confusion_csv(const ConfusionMatrix& confusion) {
  std::string out = "predicted\\true";
  for (int c : confusion.classes) out += ',' + std::to_string(c);
  out += '\n';
  for (Eigen::Index i = 0; i < confusion.fractions.rows(); ++i) {
    out += std::to_string(confusion.classes[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < confusion.fractions.cols(); ++j) out += ',' + format_double(confusion.fractions(i, j));
    out += '\n';
  }
  return out;
}

void write_report(const BenchmarkReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "confusion");
  for (const auto& r : report.rows) {
    if (r.accuracy) write_text_atomic(dir / "confusion" / (r.config_id + ".csv"), confusion_csv(r.confusion));
  }
  write_text_atomic(dir / "config.json", report.resolved_config);
  write_text_atomic(dir / "timings.csv", timings_csv(report));
  write_text_atomic(dir / "results.csv", results_csv(report));
}

std::string render_tables(std::string_view text) {
  struct Cell {
    std::string table, protocol, row, classifier, accuracy;
  };
  std::vector<Cell> cells;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    while (f.size() < 9) f.emplace_back();
    const std::string row = std::string(f[3] == "on" ? "" : "raw ") + f[4] + (f[5] == "none" ? "" : " + " + f[5]);
    cells.push_back({f[1], f[2], row, f[6], f[7]});
  }

  std::ostringstream out;
  std::vector<std::string> tables;
  for (const auto& c : cells)
    if (std::find(tables.begin(), tables.end(), c.table) == tables.end()) tables.push_back(c.table);
  for (const auto& t : tables) {
    std::vector<std::string> rows, cols;
    std::map<std::pair<std::string, std::string>, std::string> acc;
    std::string protocol;
    for (const auto& c : cells) {
      if (c.table != t) continue;
      protocol = c.protocol;
      if (std::find(rows.begin(), rows.end(), c.row) == rows.end()) rows.push_back(c.row);
      if (std::find(cols.begin(), cols.end(), c.classifier) == cols.end()) cols.push_back(c.classifier);
      acc[{c.row, c.classifier}] = c.accuracy;
    }
    out << t << " (" << protocol << "), accuracy %\n";
    out << std::string(18, ' ');
    for (const auto& c : cols) out << std::string(12 - std::min<std::size_t>(12, c.size()), ' ') << c;
    out << '\n';
    for (const auto& r : rows) {
      out << r << std::string(18 - std::min<std::size_t>(18, r.size()), ' ');
      for (const auto& c : cols) {
        const std::string& a = acc[{r, c}];
        char buf[32];
        if (a.empty()) {
          std::snprintf(buf, sizeof buf, "%12s", "error");
        } else {
          std::snprintf(buf, sizeof buf, "%12.2f", 100.0 * std::stod(a));
        }
        out << buf;
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace vitac
