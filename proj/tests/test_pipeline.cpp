#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "vitac/error.hpp"
#include "vitac/io.hpp"
#include "vitac/log.hpp"
#include "vitac/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <mutex>

using namespace vitac;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("vitac_pipeline_" + name);
  fs::remove_all(dir);
  return dir;
}

struct WarningLog {
  std::mutex mu;
  std::vector<std::string> lines;
  WarningLog() {
    set_warning_handler([this](std::string_view m) {
      std::lock_guard lock(mu);
      lines.emplace_back(m);
    });
  }
  ~WarningLog() { set_warning_handler({}); }
};

PipelineConfig fast_config() {
  PipelineConfig c;
  c.preprocessing.esf_samples = 4000;
  c.classifier = ClassifierSpec::parse("1nn");
  return c;
}

GenerationParams small_params(int classes, int visual, int tactile) {
  GenerationParams g;
  g.classes = classes;
  g.visual_per_class = visual;
  g.tactile_per_class = tactile;
  g.seed = 5;
  return g;
}

// Shared small dataset: 3 classes x (4 visual + 2 tactile).
const fs::path& small_dataset() {
  static const fs::path dir = [] {
    auto d = scratch_dir("shared");
    generate_dataset(d, small_params(3, 4, 2));
    return d;
  }();
  return dir;
}

std::vector<PointCloud> visual_clouds(int classes, int per_class, std::uint64_t seed) {
  std::vector<PointCloud> out;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i)
      out.push_back(sample_visual(make_object(c, seed + static_cast<std::uint64_t>(i)), {}, {}, seed + i));
  return out;
}

}  // namespace

TEST_CASE("classifier names") {
  for (const char* n : {"1nn", "3nn", "5nn", "svm_linear", "svm_rbf"}) CHECK(ClassifierSpec::parse(n).name() == n);
  CHECK(ClassifierSpec::parse("SVM").name() == "svm_rbf");
  CHECK(ClassifierSpec::parse("7nn").k == 7);
  CHECK_THROWS_AS(ClassifierSpec::parse("0nn"), Error);
  CHECK_THROWS_AS(ClassifierSpec::parse("tree"), Error);
  CHECK(parse_adaptation("GFK") == Adaptation::gfk);
  CHECK_THROWS_AS(parse_adaptation("tca"), Error);
}

TEST_CASE("config documents") {
  PipelineConfig c;
  c.preprocessing.equalize = false;
  c.preprocessing.equalization.voxel_edge = 0.004;
  c.preprocessing.descriptor = DescriptorKind::esf;
  c.preprocessing.seed = 99;
  c.adaptation = Adaptation::pca;
  c.subspace_dim = 12;
  c.standardize = true;
  c.classifier = ClassifierSpec::parse("svm_linear");
  c.classifier.C = 3.5;
  const std::string text = dump_config(c);
  const PipelineConfig back = parse_config(text);
  CHECK(dump_config(back) == text);
  CHECK(back.preprocessing.equalization.voxel_edge == 0.004);
  CHECK(back.subspace_dim == 12);
  CHECK(back.classifier.C == 3.5);

  // Defaults fill anything left out.
  const PipelineConfig partial = parse_config(R"({"adaptation": {"method": "gfk"}})");
  CHECK(partial.adaptation == Adaptation::gfk);
  CHECK(partial.subspace_dim == 27);
  CHECK(partial.preprocessing.descriptor == DescriptorKind::clue);
  CHECK(partial.preprocessing.esf_samples == 20000);

  CHECK_THROWS_AS(parse_config("{"), Error);
  CHECK_THROWS_AS(parse_config(R"({"adaptation": {"subspace_dim": 640}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"classifier": {"C": -1}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"preprocessing": {"descriptor": "pfh"}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"preprocessing": {"esf_samples": "many"}})"), Error);

  const fs::path dir = scratch_dir("config");
  fs::create_directories(dir);
  write_text_atomic(dir / "c.json", R"({"classifier": {"name": "3nn"}})");
  CHECK(load_config(dir / "c.json").classifier.k == 3);
  ::setenv("VITAC_CONFIG", (dir / "c.json").c_str(), 1);
  CHECK(load_config().classifier.k == 3);
  ::unsetenv("VITAC_CONFIG");
  CHECK(load_config().classifier.k == 5);
  fs::remove_all(dir);
}

TEST_CASE("dataset generation and manifest") {
  const fs::path dir = small_dataset();
  const DatasetManifest m = load_manifest(dir);
  CHECK(m.class_names == std::vector<std::string>{"cup_mat", "mat", "tweezers"});
  CHECK(m.select(Modality::visual).size() == 12);
  CHECK(m.select(Modality::tactile).size() == 6);
  CHECK(m.generation.visual_per_class == 4);

  int pose0 = 0;
  for (const auto& e : m.select(Modality::visual)) {
    if (e.class_id == 0 && e.pose == 0) ++pose0;
    const PointCloud c = read_cloud(m.root / e.file);
    CHECK(c.modality == Modality::visual);
    CHECK(c.label == std::to_string(e.class_id));
  }
  CHECK(pose0 == 2);

  // Same parameters, same bytes.
  const fs::path again = scratch_dir("again");
  generate_dataset(again, small_params(3, 4, 2));
  for (const auto& e : m.entries) CHECK(read_text(dir / e.file) == read_text(again / e.file));
  CHECK(read_text(dir / kManifestFile) == read_text(again / kManifestFile));

  fs::remove(again / m.entries.back().file);
  CHECK_THROWS_AS(load_manifest(again), Error);
  fs::remove_all(again);

  CHECK_THROWS_AS(generate_dataset(scratch_dir("bad"), small_params(16, 1, 1)), Error);
}

TEST_CASE("cmr training reads visual files only") {
  CloudStore store(load_manifest(small_dataset()));
  const PipelineModel model = cmr_train(store, fast_config());
  const ReadAudit audit = store.audit();
  CHECK(audit.visual_reads == 12);
  CHECK(audit.tactile_reads == 0);
  CHECK(audit.tactile_labels == 0);
  CHECK(model.classifier.vectors.rows() == 12);
  CHECK(model.classifier.classes == std::vector<int>{0, 1, 2});
}

TEST_CASE("cmr model stores one descriptor per training cloud") {
  const auto clouds = visual_clouds(2, 3, 40);
  const PipelineModel model = cmr_train(clouds, fast_config());
  CHECK(model.classifier.vectors.rows() == 6);
  CHECK(model.classifier.vectors.cols() == 640);

  // 1-NN on its own training set.
  for (const auto& c : clouds) CHECK(recognize(model, c) == std::stoi(*c.label));

  PipelineConfig raw = fast_config();
  raw.preprocessing.equalize = false;
  const PipelineModel raw_model = cmr_train(clouds, raw);
  for (const auto& c : clouds) CHECK(recognize(raw_model, c) == std::stoi(*c.label));

  std::vector<PointCloud> one_class(clouds.begin(), clouds.begin() + 3);
  CHECK_THROWS_AS(cmr_train(one_class, fast_config()), Error);
  auto unlabeled = clouds;
  unlabeled[0].label.reset();
  CHECK_THROWS_AS(cmr_train(unlabeled, fast_config()), Error);
}

TEST_CASE("recognition") {
  const auto clouds = visual_clouds(3, 2, 60);
  const PipelineModel model = cmr_train(clouds, fast_config());
  SensorSpec quiet;
  quiet.noise_sigma = 0.0;
  const ObjectModel obj = make_object(1, 60);
  const PointCloud touch = sample_tactile(obj, quiet, make_grid(obj), 0);
  const int first = recognize(model, touch);
  for (int i = 0; i < 3; ++i) CHECK(recognize(model, touch) == first);

  PointCloud empty;
  empty.modality = Modality::tactile;
  try {
    recognize(model, empty);
    FAIL("expected EmptyCloud");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCloud);
  }
  PointCloud tiny = touch.with_points({touch.points[0], touch.points[1]});
  PipelineModel raw = model;
  raw.config.preprocessing.equalize = false;
  CHECK_THROWS_AS(recognize(raw, tiny), Error);
}

TEST_CASE("tactile query of a training-identical object") {
  // Visual and noise-free tactile clouds of the very same instances.
  const std::vector<int> classes{0, 12, 14};
  std::vector<PointCloud> train;
  for (int c : classes)
    for (std::uint64_t s = 0; s < 3; ++s) train.push_back(sample_visual(make_object(c, 300), {}, {}, s));
  PipelineConfig cfg;
  cfg.classifier = ClassifierSpec::parse("1nn");
  const PipelineModel model = cmr_train(train, cfg);
  SensorSpec quiet;
  quiet.noise_sigma = 0.0;
  for (int c : classes) {
    const ObjectModel obj = make_object(c, 300);
    CHECK(recognize(model, sample_tactile(obj, quiet, make_grid(obj), 0)) == c);
  }
}

TEST_CASE("transfer-learning training never consumes target labels") {
  WarningLog log;
  CloudStore store(load_manifest(small_dataset()));
  PipelineConfig cfg = fast_config();
  cfg.adaptation = Adaptation::gfk;
  cfg.subspace_dim = 4;
  const PipelineModel model = tlcmr_train(store, cfg);
  const ReadAudit audit = store.audit();
  CHECK(audit.tactile_reads == 6);
  CHECK(audit.tactile_labels == 0);
  CHECK(audit.labels_stripped == 6);
  CHECK(log.lines.size() == 1);
  REQUIRE(model.gfk);

  // In-memory form: labeled and unlabeled targets give the same model.
  const auto source = visual_clouds(2, 3, 80);
  std::vector<PointCloud> target;
  for (int c = 0; c < 2; ++c) {
    const ObjectModel obj = make_object(c, 81);
    target.push_back(sample_tactile(obj, {}, make_grid(obj), 1));
    target.push_back(sample_tactile(obj, {}, make_grid(obj), 2));
  }
  log.lines.clear();
  auto bare = target;
  for (auto& t : bare) t.label.reset();
  cfg.subspace_dim = 3;
  const std::string unlabeled = dump_model(tlcmr_train(source, bare, cfg));
  CHECK(log.lines.empty());
  const std::string labeled = dump_model(tlcmr_train(source, target, cfg));
  CHECK(log.lines.size() == 1);
  CHECK(labeled == unlabeled);

  try {
    tlcmr_train(source, {}, cfg);
    FAIL("expected MissingTargetData");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingTargetData);
  }
  PipelineConfig none = cfg;
  none.adaptation = Adaptation::none;
  CHECK_THROWS_AS(tlcmr_train(source, bare, none), Error);
}

TEST_CASE("identical domains reduce GFK to the plain metric") {
  // Data inside a 3-D affine subspace of R^10: G = 2 X X^T acts as twice
  // the identity on every difference vector.
  oracle::Rng rng(4);
  const Eigen::MatrixXd basis = oracle::random_orthonormal(10, 3, rng);
  FeatureSet s;
  s.vectors = (oracle::gaussian(60, 3, rng) * basis.transpose()).rowwise() +
              oracle::gaussian(1, 10, rng).row(0);
  for (int i = 0; i < 60; ++i) s.labels.push_back(s.vectors.row(i).dot(basis.col(0)) > 0 ? 1 : 0);
  FeatureSet t;
  t.domain = Domain::target;
  t.vectors = s.vectors;

  PipelineConfig cfg;
  cfg.preprocessing.descriptor = DescriptorKind::esf;  // only sets the dimension bound
  cfg.classifier = ClassifierSpec::parse("3nn");
  const PipelineModel plain = fit_model(s, nullptr, cfg);
  cfg.adaptation = Adaptation::gfk;
  cfg.subspace_dim = 3;
  const PipelineModel adapted = fit_model(s, &t, cfg);
  CHECK(adapted.gfk->theta().maxCoeff() < 1e-6);
  const Eigen::MatrixXd queries = (oracle::gaussian(200, 3, rng) * basis.transpose()).rowwise() +
                                  s.vectors.colwise().mean();
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    CHECK(adapted.classify(queries.row(i).transpose()) == plain.classify(queries.row(i).transpose()));
}

TEST_CASE("model files round trip") {
  const auto source = visual_clouds(3, 3, 90);
  std::vector<PointCloud> target;
  for (int c = 0; c < 3; ++c) {
    const ObjectModel obj = make_object(c, 91);
    target.push_back(sample_tactile(obj, {}, make_grid(obj), 3));
    target.back().label.reset();
  }
  const fs::path dir = scratch_dir("models");
  fs::create_directories(dir);
  std::vector<PipelineConfig> configs;
  for (const char* cls : {"1nn", "svm_linear", "svm_rbf"}) {
    for (Adaptation a : {Adaptation::none, Adaptation::pca, Adaptation::gfk}) {
      PipelineConfig c = fast_config();
      c.classifier = ClassifierSpec::parse(cls);
      c.adaptation = a;
      c.subspace_dim = 2;
      c.standardize = a == Adaptation::pca;
      configs.push_back(c);
    }
  }
  for (const auto& cfg : configs) {
    const PipelineModel m = cfg.adaptation == Adaptation::none ? cmr_train(source, cfg)
                                                               : tlcmr_train(source, target, cfg);
    save_model(m, dir / "m.json");
    const PipelineModel back = load_model(dir / "m.json");
    CHECK(dump_model(back) == dump_model(m));
    for (const auto& t : target) CHECK(recognize(back, t) == recognize(m, t));
    if (cfg.classifier.algorithm == Algorithm::svm) {
      const Eigen::VectorXd x = back.features(describe(target[0], cfg.preprocessing).values.transpose()).row(0).transpose();
      const std::vector<double> a = svm_decision_values(m.classifier, x);
      const std::vector<double> b = svm_decision_values(back.classifier, x);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12 * (1.0 + std::abs(a[i])));
    }
  }
  CHECK_THROWS_AS(parse_model("{}"), Error);
  CHECK_THROWS_AS(load_model(dir / "nope.json"), Error);
  fs::remove_all(dir);
}

TEST_CASE("benchmark on a small dataset") {
  WarningLog log;
  BenchmarkOptions opt;
  opt.base = fast_config();
  opt.base.subspace_dim = 5;
  opt.folds = 2;
  opt.classifiers = {ClassifierSpec::parse("1nn"), ClassifierSpec::parse("svm_linear")};

  CloudStore store(load_manifest(small_dataset()));
  const BenchmarkReport report = run_benchmark(store, opt);
  CHECK(store.audit().tactile_labels == 0);

  std::size_t scored = 0;
  for (const auto& r : report.rows) {
    if (r.table == "featurize") continue;
    ++scored;
    CHECK(r.status == "ok");
    REQUIRE(r.accuracy.has_value());
    CHECK(*r.accuracy >= 0.0);
    CHECK(*r.accuracy <= 1.0);
    CHECK(r.confusion.counts.rows() == 3);
    // Columns of the confusion fractions sum to one for classes seen in testing.
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(r.confusion.fractions.col(j).sum() == doctest::Approx(1.0));
  }
  CHECK(scored == 2 * 4 * 2 + 3 * 2 * 2 + 4 * 2);
  REQUIRE(report.find("cross_modal-pre-clue-none-1nn") != nullptr);
  REQUIRE(report.find("adaptation-pre-clue-gfk-svm_linear") != nullptr);
  REQUIRE(report.find("monomodal-pre-esf-none-1nn") != nullptr);
  CHECK(report.find("monomodal-pre-esf-none-1nn")->protocol == "visual_2fold");
  CHECK(report.best("cross_modal", true, DescriptorKind::clue, Adaptation::none).has_value());

  // Cross-modal accuracy matches an independent re-scoring of the rows.
  const auto* row = report.find("cross_modal-pre-clue-none-1nn");
  CHECK(*row->accuracy == doctest::Approx(row->confusion.counts.trace() / 6.0));

  const std::string csv = results_csv(report);
  CHECK(csv.rfind("config_id,table,protocol,preprocess,descriptor,adaptation,classifier,accuracy,status\n", 0) == 0);
  CHECK(render_tables(csv).find("adaptation (visual_to_tactile)") != std::string::npos);

  const fs::path out = scratch_dir("report");
  write_report(report, out);
  CHECK(read_text(out / "results.csv") == csv);
  CHECK(fs::exists(out / "timings.csv"));
  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::exists(out / "confusion" / "cross_modal-pre-clue-none-1nn.csv"));

  // Rerun: identical results text.
  CloudStore again(load_manifest(small_dataset()));
  CHECK(results_csv(run_benchmark(again, opt)) == csv);

  // A failing configuration is reported, the rest still run.
  BenchmarkOptions bad = opt;
  bad.base.subspace_dim = 300;  // exceeds the rank of 6 tactile descriptors
  bad.cross_modal = false;
  bad.monomodal = false;
  CloudStore third(load_manifest(small_dataset()));
  const BenchmarkReport failed = run_benchmark(third, bad);
  std::size_t errors = 0;
  for (const auto& r : failed.rows)
    if (r.table == "adaptation") {
      CHECK_FALSE(r.accuracy.has_value());
      CHECK(r.status.rfind("error", 0) == 0);
      ++errors;
    }
  CHECK(errors == 12);
  CHECK(render_tables(results_csv(failed)).find("error") != std::string::npos);
  fs::remove_all(out);
}
