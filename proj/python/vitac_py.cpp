#include "vitac/adapt.hpp"
#include "vitac/descriptors.hpp"
#include "vitac/equalize.hpp"
#include "vitac/error.hpp"
#include "vitac/io.hpp"
#include "vitac/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace vitac;

namespace {

using RowPoints = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

RowPoints to_array(const std::vector<Point>& pts) {
  RowPoints out(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

std::vector<Point> from_array(const RowPoints& a) {
  std::vector<Point> out(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) out[static_cast<std::size_t>(i)] = a.row(i).transpose();
  return out;
}

// None, a JSON string or a dict; missing fields take their defaults.
PipelineConfig config_of(const py::object& obj) {
  if (obj.is_none()) return PipelineConfig{};
  if (py::isinstance<py::str>(obj)) return parse_config(obj.cast<std::string>());
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return parse_config(text);
}

py::object config_dict(const PipelineConfig& c) {
  return py::module_::import("json").attr("loads")(dump_config(c));
}

Preprocessing preprocessing_of(const py::object& obj) { return config_of(obj).preprocessing; }

Descriptor descriptor_of(const Eigen::VectorXd& v, DescriptorKind kind) {
  require(v.size() == descriptor_length(kind), ErrorCode::DimensionMismatch, "descriptor has the wrong length");
  return Descriptor{kind, v};
}

FeatureSet features_of(const Eigen::MatrixXd& rows, Domain domain) {
  FeatureSet s;
  s.vectors = rows;
  s.domain = domain;
  return s;
}

}  // namespace

PYBIND11_MODULE(_vitac, m) {
  m.doc() = "Visuo-tactile cross-modal object recognition";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<PointCloud>(m, "PointCloud")
      .def(py::init([](const RowPoints& points, const std::string& modality, std::optional<std::string> label,
                       std::optional<Eigen::Vector3d> sensor_origin) {
             PointCloud c;
             c.points = from_array(points);
             c.modality = parse_modality(modality);
             c.label = std::move(label);
             c.sensor_origin = sensor_origin;
             return c;
           }),
           py::arg("points"), py::arg("modality") = "visual", py::arg("label") = py::none(),
           py::arg("sensor_origin") = py::none())
      .def_property(
          "points", [](const PointCloud& c) { return to_array(c.points); },
          [](PointCloud& c, const RowPoints& a) { c.points = from_array(a); })
      .def_property(
          "modality", [](const PointCloud& c) { return std::string(to_string(c.modality)); },
          [](PointCloud& c, const std::string& s) { c.modality = parse_modality(s); })
      .def_readwrite("label", &PointCloud::label)
      .def_readwrite("sensor_origin", &PointCloud::sensor_origin)
      .def("__len__", &PointCloud::size)
      .def("__repr__", [](const PointCloud& c) {
        return "<PointCloud " + std::string(to_string(c.modality)) + " n=" + std::to_string(c.size()) + ">";
      });

  m.def("read_cloud", [](const std::filesystem::path& p) { return read_cloud(p); }, py::arg("path"));
  m.def("write_cloud", [](const std::filesystem::path& p, const PointCloud& c) { write_cloud(p, c); },
        py::arg("path"), py::arg("cloud"));

  auto eq_params = [](double step, double radius, int degree, double edge) {
    EqualizationParams p;
    p.upsample_step = step;
    p.search_radius = radius;
    p.poly_degree = degree;
    p.voxel_edge = edge;
    p.validate();
    return p;
  };
  const EqualizationParams d;
  m.def(
      "equalize",
      [=](const PointCloud& c, double step, double radius, int degree, double edge) {
        py::gil_scoped_release nogil;
        return equalize(c, eq_params(step, radius, degree, edge));
      },
      py::arg("cloud"), py::arg("upsample_step") = d.upsample_step, py::arg("search_radius") = d.search_radius,
      py::arg("poly_degree") = d.poly_degree, py::arg("voxel_edge") = d.voxel_edge,
      "MLS resampling followed by the voxel-grid filter.");
  m.def(
      "mls_resample",
      [=](const PointCloud& c, double step, double radius, int degree) {
        py::gil_scoped_release nogil;
        return mls_resample(c, eq_params(step, radius, degree, d.voxel_edge));
      },
      py::arg("cloud"), py::arg("upsample_step") = d.upsample_step, py::arg("search_radius") = d.search_radius,
      py::arg("poly_degree") = d.poly_degree);
  m.def("voxel_filter", &voxel_filter, py::arg("cloud"), py::arg("edge") = d.voxel_edge);

  m.def(
      "estimate_normals",
      [](const PointCloud& c, int k) { return to_array(estimate_normals(c, k).normals); }, py::arg("cloud"),
      py::arg("k") = kDefaultNormalNeighbors);
  m.def(
      "esf", [](const PointCloud& c, int samples, std::uint64_t seed) { return compute_esf(c, samples, seed).values; },
      py::arg("cloud"), py::arg("samples") = kDefaultEsfSamples, py::arg("seed") = 0);
  m.def(
      "shot",
      [](const PointCloud& c, const RowPoints& normals) {
        return compute_shot(c, NormalField{from_array(normals)}).values;
      },
      py::arg("cloud"), py::arg("normals"));
  m.def(
      "clue",
      [](const Eigen::VectorXd& shot, const Eigen::VectorXd& esf) {
        return compute_clue(descriptor_of(shot, DescriptorKind::shot), descriptor_of(esf, DescriptorKind::esf)).values;
      },
      py::arg("shot"), py::arg("esf"));
  m.def(
      "describe",
      [](const PointCloud& c, const py::object& config) {
        const Preprocessing p = preprocessing_of(config);
        py::gil_scoped_release nogil;
        return describe(c, p).values;
      },
      py::arg("cloud"), py::arg("config") = py::none(),
      "Descriptor of one cloud under the preprocessing section of `config`.");

  py::class_<GfkModel, std::shared_ptr<GfkModel>>(m, "GfkModel")
      .def_static("from_bases", &GfkModel::from_bases, py::arg("source_basis"), py::arg("target_basis"))
      .def_property_readonly("kernel", &GfkModel::kernel)
      .def_property_readonly("theta", &GfkModel::theta)
      .def("similarity", [](const GfkModel& g, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return gfk_similarity(g, a, b);
      })
      .def("distance", [](const GfkModel& g, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return gfk_distance(g, a, b);
      });
  m.def(
      "gfk_fit",
      [](const Eigen::MatrixXd& source, const Eigen::MatrixXd& target, int d) {
        return std::make_shared<GfkModel>(
            gfk_fit(features_of(source, Domain::source), features_of(target, Domain::target), d));
      },
      py::arg("source"), py::arg("target"), py::arg("d"));
  m.def("geodesic_point", &geodesic_point, py::arg("model"), py::arg("t"));

  m.def("default_config", [] { return config_dict(PipelineConfig{}); });

  py::class_<PipelineModel>(m, "Model")
      .def_property_readonly("config", [](const PipelineModel& p) { return config_dict(p.config); })
      .def("recognize", [](const PipelineModel& p, const PointCloud& c) {
        py::gil_scoped_release nogil;
        return recognize(p, c);
      })
      .def("classify", &PipelineModel::classify, py::arg("descriptor"))
      .def("dumps", &dump_model)
      .def("save", [](const PipelineModel& p, const std::filesystem::path& path) { save_model(p, path); });
  m.def("load_model", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"));

  m.def(
      "cmr_train",
      [](const std::filesystem::path& data, const py::object& config) {
        const PipelineConfig c = config_of(config);
        py::gil_scoped_release nogil;
        CloudStore store(load_manifest(data));
        return cmr_train(store, c);
      },
      py::arg("data"), py::arg("config") = py::none(), "Train on the visual clouds of a dataset.");
  m.def(
      "tlcmr_train",
      [](const std::filesystem::path& data, const py::object& config) {
        PipelineConfig c = config_of(config);
        if (c.adaptation == Adaptation::none) c.adaptation = Adaptation::gfk;
        py::gil_scoped_release nogil;
        CloudStore store(load_manifest(data));
        return tlcmr_train(store, c);
      },
      py::arg("data"), py::arg("config") = py::none(),
      "Train on labeled visual clouds plus unlabeled tactile clouds for adaptation.");

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& dir, int classes, int visual_per_class, int tactile_per_class,
         std::uint64_t seed) {
        GenerationParams g;
        g.classes = classes;
        g.visual_per_class = visual_per_class;
        g.tactile_per_class = tactile_per_class;
        g.seed = seed;
        py::gil_scoped_release nogil;
        return generate_dataset(dir, g).entries.size();
      },
      py::arg("dir"), py::arg("classes") = 15, py::arg("visual_per_class") = 40, py::arg("tactile_per_class") = 5,
      py::arg("seed") = 1, "Write a synthetic dataset; returns the number of clouds.");

  m.def(
      "benchmark",
      [](const std::filesystem::path& data, const std::optional<std::filesystem::path>& out,
         const std::vector<std::string>& classifiers, int folds, const py::object& config, bool cross_modal,
         bool adaptation, bool monomodal) {
        BenchmarkOptions o;
        o.base = config_of(config);
        for (const auto& n : classifiers) o.classifiers.push_back(ClassifierSpec::parse(n));
        o.folds = folds;
        o.cross_modal = cross_modal;
        o.adaptation = adaptation;
        o.monomodal = monomodal;
        py::gil_scoped_release nogil;
        CloudStore store(load_manifest(data));
        const BenchmarkReport r = run_benchmark(store, o);
        if (out) write_report(r, *out);
        return results_csv(r);
      },
      py::arg("data"), py::arg("out") = py::none(), py::arg("classifiers") = std::vector<std::string>{},
      py::arg("folds") = 10, py::arg("config") = py::none(), py::arg("cross_modal") = true,
      py::arg("adaptation") = true, py::arg("monomodal") = true,
      "Run the evaluation grid; returns the results CSV text.");
}
