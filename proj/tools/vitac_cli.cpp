#include "vitac/equalize.hpp"
#include "vitac/error.hpp"
#include "vitac/io.hpp"
#include "vitac/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using namespace vitac;

namespace {

// Flags that override individual PipelineConfig fields on top of --config
// (or $VITAC_CONFIG, or the defaults).
struct ConfigFlags {
  std::string config_path;
  std::optional<bool> equalize;
  std::optional<double> upsample_step, search_radius, voxel_edge;
  std::optional<int> poly_degree;
  std::optional<std::string> descriptor;
  std::optional<int> esf_samples, normal_neighbors;
  std::optional<std::string> adaptation;
  std::optional<int> subspace_dim;
  std::optional<bool> standardize;
  std::optional<std::string> classifier;
  std::optional<int> k;
  std::optional<double> C, gamma, tol;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app, bool with_model_flags) {
    app->add_option("--config", config_path, "JSON config file (default: $VITAC_CONFIG)");
    app->add_flag("--equalize,!--no-equalize", equalize, "MLS + voxel equalization on/off");
    app->add_option("--upsample-step", upsample_step, "MLS upsampling step [m]");
    app->add_option("--search-radius", search_radius, "MLS search radius [m]");
    app->add_option("--poly-degree", poly_degree, "MLS polynomial degree (0-2)");
    app->add_option("--voxel-edge", voxel_edge, "voxel grid edge [m]");
    app->add_option("--descriptor", descriptor, "shot | esf | concat | clue");
    app->add_option("--esf-samples", esf_samples, "ESF point-triple samples");
    app->add_option("--normal-neighbors", normal_neighbors, "neighbors for normal estimation");
    app->add_option("--seed", seed, "seed for every stochastic step");
    if (!with_model_flags) return;
    app->add_option("--adaptation", adaptation, "none | pca | gfk");
    app->add_option("--subspace-dim", subspace_dim, "subspace dimension d");
    app->add_flag("--standardize,!--no-standardize", standardize, "z-score descriptors before adaptation");
    app->add_option("--classifier", classifier, "1nn, 3nn, 5nn, ..., svm_linear, svm_rbf");
    app->add_option("--k", k, "neighbors for kNN");
    app->add_option("--C", C, "SVM box constraint");
    app->add_option("--gamma", gamma, "RBF gamma (0 = automatic)");
    app->add_option("--tol", tol, "SMO stopping tolerance");
  }

  PipelineConfig resolve() const {
    PipelineConfig c = load_config(config_path);
    auto& p = c.preprocessing;
    if (equalize) p.equalize = *equalize;
    if (upsample_step) p.equalization.upsample_step = *upsample_step;
    if (search_radius) p.equalization.search_radius = *search_radius;
    if (poly_degree) p.equalization.poly_degree = *poly_degree;
    if (voxel_edge) p.equalization.voxel_edge = *voxel_edge;
    if (descriptor) p.descriptor = parse_descriptor_kind(*descriptor);
    if (esf_samples) p.esf_samples = *esf_samples;
    if (normal_neighbors) p.normal_neighbors = *normal_neighbors;
    if (seed) p.seed = *seed;
    if (adaptation) c.adaptation = parse_adaptation(*adaptation);
    if (subspace_dim) c.subspace_dim = *subspace_dim;
    if (standardize) c.standardize = *standardize;
    if (classifier) c.classifier = ClassifierSpec::parse(*classifier);
    if (k) c.classifier.k = *k;
    if (C) c.classifier.C = *C;
    if (gamma) c.classifier.gamma = *gamma;
    if (tol) c.classifier.tol = *tol;
    c.validate();
    return c;
  }
};

std::string descriptor_text(const Descriptor& d) {
  std::string out;
  for (Eigen::Index i = 0; i < d.values.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(d.values[i]);
  }
  return out + '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visuo-tactile cross-modal object recognition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "vitac 0.1.0");

  // generate
  GenerationParams gen;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset and its manifest");
  generate->add_option("--out", gen_out, "output directory")->required();
  generate->add_option("--classes", gen.classes, "number of object classes")->capture_default_str();
  generate->add_option("--visual-per-class", gen.visual_per_class)->capture_default_str();
  generate->add_option("--tactile-per-class", gen.tactile_per_class)->capture_default_str();
  generate->add_option("--poses", gen.poses, "placements the visual views are split across")->capture_default_str();
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--density", gen.visual.density, "visual points per m^2")->capture_default_str();
  generate->add_option("--visual-noise", gen.visual.noise_sigma, "[m]")->capture_default_str();
  generate->add_option("--tactile-noise", gen.sensor.noise_sigma, "[m]")->capture_default_str();
  generate->add_option("--force-threshold", gen.sensor.force_threshold, "[N]")->capture_default_str();
  generate->add_option("--grid-pitch", gen.grid_pitch, "[m]")->capture_default_str();

  // equalize
  ConfigFlags eq_flags;
  std::string eq_in, eq_out;
  auto* equalize_cmd = app.add_subcommand("equalize", "MLS resampling + voxel filter of one cloud");
  equalize_cmd->add_option("input", eq_in, "cloud file")->required();
  equalize_cmd->add_option("--out", eq_out, "output cloud file")->required();
  eq_flags.attach(equalize_cmd, false);

  // describe
  ConfigFlags desc_flags;
  std::string desc_in, desc_out;
  auto* describe_cmd = app.add_subcommand("describe", "Descriptor of one cloud as a CSV row");
  describe_cmd->add_option("input", desc_in, "cloud file")->required();
  describe_cmd->add_option("--out", desc_out, "write here instead of stdout");
  desc_flags.attach(describe_cmd, false);

  // train / adapt-train
  ConfigFlags train_flags, adapt_flags;
  std::string train_data, train_model, adapt_data, adapt_model;
  auto* train = app.add_subcommand("train", "Cross-modal training on the visual clouds of a dataset");
  train->add_option("--data", train_data, "dataset directory or manifest")->required();
  train->add_option("--model", train_model, "model file to write")->required();
  train_flags.attach(train, true);
  auto* adapt_train = app.add_subcommand("adapt-train", "Training with unlabeled tactile clouds for adaptation");
  adapt_train->add_option("--data", adapt_data, "dataset directory or manifest")->required();
  adapt_train->add_option("--model", adapt_model, "model file to write")->required();
  adapt_flags.attach(adapt_train, true);

  // recognize
  std::string rec_model;
  std::vector<std::string> rec_inputs;
  auto* recognize_cmd = app.add_subcommand("recognize", "Classify clouds with a trained model");
  recognize_cmd->add_option("--model", rec_model, "model file")->required();
  recognize_cmd->add_option("inputs", rec_inputs, "cloud files")->required();

  // benchmark
  ConfigFlags bench_flags;
  std::string bench_data, bench_out;
  std::vector<std::string> bench_classifiers;
  BenchmarkOptions bench;
  bool skip_cross = false, skip_adapt = false, skip_mono = false;
  auto* benchmark = app.add_subcommand("benchmark", "Run the evaluation grid and write a report");
  benchmark->add_option("--data", bench_data, "dataset directory or manifest")->required();
  benchmark->add_option("--out", bench_out, "report directory")->required();
  benchmark->add_option("--classifiers", bench_classifiers, "default: 1nn 3nn 5nn svm_linear svm_rbf");
  benchmark->add_option("--folds", bench.folds, "folds for the monomodal protocol")->capture_default_str();
  benchmark->add_flag("--skip-cross-modal", skip_cross);
  benchmark->add_flag("--skip-adaptation", skip_adapt);
  benchmark->add_flag("--skip-monomodal", skip_mono);
  bench_flags.attach(benchmark, true);

  // report
  std::string report_in;
  auto* report = app.add_subcommand("report", "Print accuracy tables from a results.csv");
  report->add_option("input", report_in, "results.csv or the report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      const DatasetManifest m = generate_dataset(gen_out, gen);
      std::cout << "wrote " << m.entries.size() << " clouds to " << gen_out << "\n";
    } else if (*equalize_cmd) {
      const PipelineConfig c = eq_flags.resolve();
      const PointCloud in = read_cloud(eq_in);
      const PointCloud out = equalize(in, c.preprocessing.equalization);
      write_cloud(eq_out, out);
      std::cout << in.size() << " -> " << out.size() << " points\n";
    } else if (*describe_cmd) {
      const PipelineConfig c = desc_flags.resolve();
      const std::string row = descriptor_text(describe(read_cloud(desc_in), c.preprocessing));
      if (desc_out.empty()) {
        std::cout << row;
      } else {
        write_text_atomic(desc_out, row);
      }
    } else if (*train) {
      CloudStore store(load_manifest(train_data));
      save_model(cmr_train(store, train_flags.resolve()), train_model);
      std::cout << "model written to " << train_model << "\n";
    } else if (*adapt_train) {
      PipelineConfig c = adapt_flags.resolve();
      if (c.adaptation == Adaptation::none) c.adaptation = Adaptation::gfk;
      CloudStore store(load_manifest(adapt_data));
      save_model(tlcmr_train(store, c), adapt_model);
      std::cout << "model written to " << adapt_model << "\n";
    } else if (*recognize_cmd) {
      const PipelineModel model = load_model(rec_model);
      for (const auto& f : rec_inputs) std::cout << f << "," << recognize(model, read_cloud(f)) << "\n";
    } else if (*benchmark) {
      bench.base = bench_flags.resolve();
      for (const auto& n : bench_classifiers) bench.classifiers.push_back(ClassifierSpec::parse(n));
      bench.cross_modal = !skip_cross;
      bench.adaptation = !skip_adapt;
      bench.monomodal = !skip_mono;
      CloudStore store(load_manifest(bench_data));
      const BenchmarkReport r = run_benchmark(store, bench);
      write_report(r, bench_out);
      std::cout << render_tables(results_csv(r));
    } else if (*report) {
      std::filesystem::path p = report_in;
      if (std::filesystem::is_directory(p)) p /= "results.csv";
      std::cout << render_tables(read_text(p));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
