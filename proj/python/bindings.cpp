#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <vector>

#include "mgnm/config.hpp"
#include "mgnm/dataset.hpp"
#include "mgnm/errors.hpp"
#include "mgnm/evaluation.hpp"
#include "mgnm/geometry.hpp"
#include "mgnm/pipeline.hpp"
#include "mgnm/synthetic.hpp"
#include "mgnm/training.hpp"

namespace py = pybind11;

namespace {

mgnm::Box to_box(const std::vector<double>& b) {
  if (b.size() != 4) throw mgnm::ShapeError("a box is [x1, y1, x2, y2]");
  return {b[0], b[1], b[2], b[3]};
}

mgnm::Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
  mgnm::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c) throw mgnm::ShapeError("ragged rows");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

std::string synthesize(const std::string& task, int train_scenes, int test_scenes, std::uint64_t seed,
                       int categories, double long_tail) {
  mgnm::synth::SynthTaskSpec spec;
  spec.kind = mgnm::synth::parse_task_kind(task);
  spec.train_scenes = train_scenes;
  spec.test_scenes = test_scenes;
  spec.seed = seed;
  spec.num_categories = categories;
  spec.long_tail = long_tail;
  return mgnm::dataset_to_json(mgnm::synth::generate_synthetic(spec));
}

std::string evaluate(const std::string& dataset_path, const std::string& predictions_path) {
  const mgnm::Dataset d = mgnm::load_dataset(dataset_path);
  return mgnm::report_to_json(mgnm::evaluate_all(mgnm::load_predictions(predictions_path), d));
}

std::string train(const std::string& config_json, const std::string& dataset_json, const std::string& out_dir) {
  const mgnm::RunConfig cfg = mgnm::config_from_json(config_json);
  const mgnm::Dataset d = mgnm::dataset_from_json(dataset_json);
  py::gil_scoped_release release;
  const auto out = mgnm::run_experiment(cfg, d, out_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(out_dir));
  return mgnm::report_to_json(out.report);
}

}  // namespace

PYBIND11_MODULE(_mgnm, m) {
  m.doc() = "Multimodal graph HOI detector core";

  py::register_exception<mgnm::Error>(m, "Error");

  m.def("iou", [](const std::vector<double>& a, const std::vector<double>& b) { return mgnm::iou(to_box(a), to_box(b)); },
        py::arg("a"), py::arg("b"));
  m.def("spatial_features",
        [](const std::vector<double>& h, const std::vector<double>& o, double width, double height) {
          const auto f = mgnm::spatial_features(to_box(h), to_box(o), width, height);
          return std::vector<double>(f.begin(), f.end());
        },
        py::arg("human"), py::arg("object"), py::arg("width"), py::arg("height"));
  m.def("average_precision", &mgnm::evaluation::average_precision, py::arg("flags"), py::arg("num_gt"));
  m.def("focal_loss",
        [](const std::vector<std::vector<double>>& logits, const std::vector<std::vector<double>>& targets, double alpha,
           double gamma) { return mgnm::training::focal_loss_value(to_matrix(logits), to_matrix(targets), alpha, gamma); },
        py::arg("logits"), py::arg("targets"), py::arg("alpha") = 0.25, py::arg("gamma") = 2.0);
  m.def("synthesize", &synthesize, "Generated dataset as JSON text", py::arg("task") = "spatial-rule",
        py::arg("train_scenes") = 256, py::arg("test_scenes") = 64, py::arg("seed") = 0, py::arg("categories") = 4,
        py::arg("long_tail") = 0.0);
  m.def("default_config", [] { return mgnm::config_to_json(mgnm::RunConfig{}); });
  m.def("evaluate", &evaluate, "Report JSON for a dataset file and a predictions file", py::arg("dataset"),
        py::arg("predictions"));
  m.def("train", &train, "Train and evaluate; returns the report JSON", py::arg("config"), py::arg("dataset"),
        py::arg("out_dir") = "");
}
