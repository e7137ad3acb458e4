#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "advunlearn/data/dataset.hpp"
#include "advunlearn/data/splits.hpp"
#include "advunlearn/defender.hpp"
#include "advunlearn/errors.hpp"
#include "advunlearn/harness/config.hpp"
#include "advunlearn/harness/experiment.hpp"
#include "advunlearn/harness/report.hpp"
#include "advunlearn/mia_eval.hpp"
#include "advunlearn/nn/checkpoint.hpp"
#include "advunlearn/pruning.hpp"

namespace py = pybind11;
using namespace advunlearn;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Adversarial machine unlearning core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);

    py::class_<LabeledDataset>(m, "Dataset")
        .def(py::init([](Matrix features, std::vector<int> labels, int num_classes) {
                 LabeledDataset ds{std::move(features), std::move(labels), num_classes};
                 ds.validate();
                 return ds;
             }),
             py::arg("features"), py::arg("labels"), py::arg("num_classes"))
        .def_readonly("features", &LabeledDataset::features)
        .def_readonly("labels", &LabeledDataset::labels)
        .def_readonly("num_classes", &LabeledDataset::num_classes)
        .def("__len__", &LabeledDataset::size)
        .def_property_readonly("dim", &LabeledDataset::dim);

    m.def("gen_synthetic", &gen_synthetic, py::arg("num_classes"), py::arg("n_per_class"), py::arg("dim"),
          py::arg("spread"), py::arg("seed"));
    m.def("load_dataset",
          [](const std::filesystem::path& p, const std::string& fmt, std::optional<int> k) {
              if (fmt != "csv" && fmt != "binary") throw ConfigError("format must be csv or binary, got " + fmt);
              return load_dataset(p, fmt == "csv" ? DataFormat::csv : DataFormat::binary, k);
          },
          py::arg("path"), py::arg("format") = "csv", py::arg("num_classes") = std::nullopt);
    m.def("save_dataset_binary", &save_dataset_binary, py::arg("dataset"), py::arg("path"));

    py::class_<SplitSet>(m, "SplitSet")
        .def_readonly("retain", &SplitSet::retain)
        .def_readonly("forget", &SplitSet::forget)
        .def_readonly("validation", &SplitSet::validation)
        .def_readonly("test", &SplitSet::test);
    m.def("make_splits",
          [](const LabeledDataset& train, const LabeledDataset& eval, const std::string& kind, double fraction,
             int class_id, std::uint64_t seed) {
              ForgetScheme s;
              s.kind = forget_kind_from_string(kind);
              s.fraction = fraction;
              s.class_id = class_id;
              s.seed = seed;
              return make_splits(train, eval, s);
          },
          py::arg("train"), py::arg("eval"), py::arg("kind") = "random", py::arg("fraction") = 0.10,
          py::arg("class_id") = 0, py::arg("seed") = 0);

    py::class_<DefenderModel>(m, "Defender")
        .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t feature_dim,
                         int num_classes, std::uint64_t seed) {
                 return DefenderModel(DefenderArch{input_dim, std::move(hidden), feature_dim, num_classes}, seed);
             }),
             py::arg("input_dim"), py::arg("hidden"), py::arg("feature_dim"), py::arg("num_classes"),
             py::arg("seed") = 0)
        .def("forward", &DefenderModel::forward, py::arg("x"))
        .def("features", &DefenderModel::features, py::arg("x"))
        .def_property_readonly("num_params", [](const DefenderModel& d) { return d.params().size(); })
        .def("save", [](const DefenderModel& d, const std::filesystem::path& p) { save_checkpoint(d.params(), p); })
        .def("load", [](DefenderModel& d, const std::filesystem::path& p) { load_checkpoint_into(d.params(), p); });

    m.def("accuracy", [](const DefenderModel& d, const LabeledDataset& ds, const IndexList& idx) {
        return accuracy(d, ds, idx);
    });
    m.def("prediction_entropy", [](const std::vector<double>& p) { return prediction_entropy(p); });
    m.def("modified_entropy", [](const std::vector<double>& p, int y) { return modified_entropy(p, y); });
    m.def("avg_disparity", [](const std::string& report, const std::string& gold) {
        return avg_disparity(report_from_json(nlohmann::json::parse(report)),
                             report_from_json(nlohmann::json::parse(gold)));
    });
    m.def("prune",
          [](DefenderModel& d, double sparsity) {
              const auto mask = omp_mask(d.params(), sparsity);
              apply_mask(d.params(), mask);
              return mask.kept;
          },
          py::arg("model"), py::arg("sparsity"), "Global magnitude pruning; returns the number of weights kept.");

    m.def("parse_config",
          [](const std::string& text, const std::vector<std::string>& overrides) {
              return serialize_config(parse_config(text, overrides));
          },
          py::arg("text"), py::arg("overrides") = std::vector<std::string>{},
          "Validates a config text with overrides and returns its canonical form.");
    m.def("run_experiment",
          [](const std::string& text, const std::vector<std::string>& overrides) {
              const auto cfg = parse_config(text, overrides);
              ExperimentResult r;
              {
                  py::gil_scoped_release release;
                  r = run_experiment(cfg);
              }
              return dump(to_json(r.aggregate));
          },
          py::arg("text"), py::arg("overrides") = std::vector<std::string>{});
    m.def("table_csv", [](const std::filesystem::path& dir) {
        const auto rows = collect_aggregates(dir);
        return table_csv(rows);
    });
}
