#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cbmloc/architectures.hpp"
#include "cbmloc/cbm.hpp"
#include "cbmloc/checkpoint.hpp"
#include "cbmloc/dataset_io.hpp"
#include "cbmloc/harness.hpp"
#include "cbmloc/metrics.hpp"
#include "cbmloc/synthgen.hpp"
#include "cbmloc/theory.hpp"
#include "cbmloc/train.hpp"

namespace py = pybind11;
using namespace cbmloc;

namespace {

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["metric"] = r.metric_name;
  d["mean"] = r.mean;
  d["per_concept"] = r.per_concept;
  d["n_samples"] = r.n_samples;
  d["n_excluded"] = r.n_excluded;
  return d;
}

py::array_t<float> pixels(const Dataset& ds) {
  py::array_t<float> out({static_cast<py::ssize_t>(ds.size()), static_cast<py::ssize_t>(ds.m)});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (int a = 0; a < ds.m; ++a) v(static_cast<py::ssize_t>(i), a) = ds.samples[i].pixels[a];
  return out;
}

py::array_t<std::uint8_t> concepts(const Dataset& ds) {
  py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(ds.size()), static_cast<py::ssize_t>(ds.k)});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (int j = 0; j < ds.k; ++j) v(static_cast<py::ssize_t>(i), j) = ds.samples[i].concepts[j];
  return out;
}

// Rows are samples on the Python side, columns on the C++ side.
Matrix columns(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& x) {
  return x.transpose();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Concept bottleneck locality toolkit (C++ core)";

  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<ConfigError>(m, "ConfigError");

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("m", &Dataset::m)
      .def_readonly("k", &Dataset::k)
      .def_readonly("image_side", &Dataset::image_side)
      .def_readonly("num_objects", &Dataset::num_objects)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def("__len__", &Dataset::size)
      .def_property_readonly("pixels", &pixels)
      .def_property_readonly("concepts", &concepts)
      .def_property_readonly("labels",
                             [](const Dataset& ds) {
                               std::vector<int> y;
                               for (const auto& s : ds.samples) y.push_back(s.label);
                               return y;
                             })
      .def("region", [](const Dataset& ds, std::size_t i, int j) { return ds.locality.region(i, j); })
      .def("save", [](const Dataset& ds, const std::string& path) { save_dataset(ds, path); });

  m.def(
      "generate_dataset",
      [](int num_objects, int samples, int image_side, double background, double shape_fill, std::uint64_t seed) {
        SynthConfig c;
        c.num_objects = num_objects;
        c.samples = samples;
        c.image_side = image_side;
        c.background = background;
        c.shape_fill = shape_fill;
        c.seed = seed;
        return generate_dataset(c);
      },
      py::arg("num_objects") = 2, py::arg("samples") = 256, py::arg("image_side") = 64, py::arg("background") = 0.0,
      py::arg("shape_fill") = 1.0, py::arg("seed") = 0);
  m.def("load_dataset", [](const std::string& path) { return load_dataset(path); });
  m.def("subsample_concept_combinations", &subsample_concept_combinations, py::arg("dataset"), py::arg("fraction"),
        py::arg("seed") = 0);
  m.def("add_gaussian_noise", &add_gaussian_noise, py::arg("dataset"), py::arg("sigma"), py::arg("seed") = 0);

  py::class_<CBModel>(m, "CBModel")
      .def_property_readonly("num_concepts", &CBModel::num_concepts)
      .def_property_readonly("num_classes", &CBModel::num_classes)
      .def_property_readonly("residual", &CBModel::residual)
      .def_property_readonly("parameter_count", [](const CBModel& c) { return c.g().parameter_count(); })
      .def_property_readonly("checksum", [](const CBModel& c) { return c.g().checksum(); })
      .def(
          "predict_concepts",
          [](const CBModel& c, const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                                     Eigen::RowMajor>>& x) {
            return Matrix(c.predict_concepts(columns(x)).transpose());
          },
          py::arg("x"), "Concept probabilities, one row per input row")
      .def(
          "predict_label",
          [](const CBModel& c, const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                                     Eigen::RowMajor>>& x) {
            return c.predict_label(columns(x));
          },
          py::arg("x"))
      .def("evaluate",
           [](const CBModel& c, const Dataset& ds) {
             const Evaluation e = evaluate(c, ds);
             py::dict d;
             d["concept_accuracy"] = e.concept_accuracy;
             d["per_concept_accuracy"] = e.per_concept_accuracy;
             d["task_accuracy"] = e.task_accuracy;
             return d;
           })
      .def("save", [](const CBModel& c, const std::string& path) { save_cbm(c, path); });
  m.def("load_cbm", [](const std::string& path) { return load_cbm(path); });

  m.def(
      "train_cbm",
      [](const Dataset& ds, const std::string& family, const std::string& variant, int depth, int mlp_width,
         int epochs, double learning_rate, int batch_size, double weight_decay, bool adversarial, bool residual,
         int label_epochs, double label_learning_rate, std::uint64_t seed) {
        TrainConfig tc;
        tc.epochs = epochs;
        tc.learning_rate = learning_rate;
        tc.batch_size = batch_size;
        tc.weight_decay = weight_decay;
        tc.seed = seed;
        if (adversarial) tc.adversarial = AdversarialConfig{};
        TrainConfig ltc = tc;
        ltc.epochs = label_epochs;
        ltc.learning_rate = label_learning_rate;
        ltc.weight_decay = 0.0;
        ltc.adversarial.reset();
        const NetworkConfig g =
            family == "mlp" ? make_mlp_config(depth, mlp_width, ds.m, ds.k, seed)
                            : make_depth_sweep_config(depth_variant_from_string(variant), depth, ds.image_side, ds.k,
                                                      seed);
        py::gil_scoped_release release;
        return train_cbm(ds, g, tc, residual, nullptr, &ltc);
      },
      py::arg("dataset"), py::arg("family") = "cnn", py::arg("variant") = "grow", py::arg("depth") = 7,
      py::arg("mlp_width") = 10, py::arg("epochs") = 50, py::arg("learning_rate") = 0.05, py::arg("batch_size") = 32,
      py::arg("weight_decay") = 0.0, py::arg("adversarial") = false, py::arg("residual") = false,
      py::arg("label_epochs") = 100, py::arg("label_learning_rate") = 0.5, py::arg("seed") = 0);

  m.def(
      "locality_leakage",
      [](const CBModel& c, const Dataset& ds, int steps, double step_size, int restarts, double penalty_lambda,
         std::size_t max_samples, std::uint64_t seed) {
        PGDConfig p;
        p.steps = steps;
        p.step_size = step_size;
        p.restarts = restarts;
        p.penalty_lambda = penalty_lambda;
        p.max_samples = max_samples;
        p.seed = seed;
        MetricReport r;
        {
          py::gil_scoped_release release;
          r = locality_leakage(c.g(), ds, ds.locality, p);
        }
        return report_dict(r);
      },
      py::arg("model"), py::arg("dataset"), py::arg("steps") = 100, py::arg("step_size") = 0.05,
      py::arg("restarts") = 3, py::arg("penalty_lambda") = 0.0, py::arg("max_samples") = 0, py::arg("seed") = 0);
  m.def(
      "locality_intervention",
      [](const CBModel& c, const Dataset& ds) { return report_dict(locality_intervention(c.g(), ds)); },
      py::arg("model"), py::arg("dataset"));
  m.def(
      "locality_masking",
      [](const CBModel& c, const Dataset& ds, const std::string& mask, double eta) {
        const MaskingPair mp = locality_masking(c.g(), ds, ds.locality, {mask_kind_from_string(mask), eta});
        py::dict d;
        d["relevant"] = report_dict(mp.relevant);
        d["irrelevant"] = report_dict(mp.irrelevant);
        return d;
      },
      py::arg("model"), py::arg("dataset"), py::arg("mask") = "zero", py::arg("eta") = 0.0);

  m.def("lemma_prod_identity", [](const std::vector<double>& p) { return theory::lemma_prod_identity(p); });
  m.def("lemma_sum_bound", [](const std::vector<double>& p) {
    const auto s = theory::lemma_sum_bound(p);
    return py::make_tuple(s.lhs, s.holds);
  });
  m.def(
      "theorem_trial",
      [](std::uint64_t seed, int kmax, double delta) -> py::object {
        const auto r = theory::run_theorem_trial(seed, kmax, delta);
        if (!r) return py::none();
        py::dict d;
        d["seed"] = r->seed;
        d["k"] = r->k;
        d["j"] = r->j;
        d["alpha"] = r->alpha;
        d["beta"] = r->beta;
        d["s"] = r->s;
        d["epsilon_hat"] = r->epsilon_hat;
        d["bound"] = r->bound;
        d["satisfied"] = r->satisfied;
        return d;
      },
      py::arg("seed"), py::arg("kmax") = 6, py::arg("delta") = 0.0);

  m.def("parse_experiment_config", [](const std::string& text) { return to_json(parse_experiment_config(text)); },
        "Validates an experiment JSON document and returns it with defaults filled in");
}
