#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mld/eval.hpp"
#include "mld/importance.hpp"
#include "mld/io.hpp"
#include "mld/mld.hpp"

namespace py = pybind11;
using namespace mld;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

RealMatrix to_matrix(const DoubleArray& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d array of features");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return RealMatrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

std::vector<double> to_vector(const DoubleArray& a) {
    if (a.ndim() != 1) throw ShapeError("expected a 1-d feature vector");
    return std::vector<double>(a.data(), a.data() + a.size());
}

DoubleArray to_array(const RealMatrix& m) {
    DoubleArray out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

// JSON crosses the boundary as plain Python objects.
py::object to_python(const json& doc) {
    return py::module_::import("json").attr("loads")(doc.dump());
}

Dataset make_dataset(const DoubleArray& features, std::vector<int> labels, std::optional<std::size_t> num_classes) {
    Dataset d;
    d.features = to_matrix(features);
    d.labels = std::move(labels);
    int top = -1;
    for (int l : d.labels) top = std::max(top, l);
    d.num_classes = num_classes.value_or(static_cast<std::size_t>(top + 1));
    d.validate();
    return d;
}

} // namespace

PYBIND11_MODULE(_mld, m) {
    m.doc() = "Multi-level decision structures distilled from MLPs";

    static py::exception<Error> mld_error(m, "MldError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = mld_error;
            PyErr_SetObject(err.ptr(), py::make_tuple(e.what(), error_kind_name(e.kind())).ptr());
        }
    });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&make_dataset), py::arg("features"), py::arg("labels"), py::arg("num_classes") = py::none())
        .def_property_readonly("features", [](const Dataset& d) { return to_array(d.features); })
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("num_classes", &Dataset::num_classes)
        .def_readonly("label_names", &Dataset::label_names)
        .def("__len__", &Dataset::size);

    m.def("load_idx", &load_idx, py::arg("images"), py::arg("labels"), py::arg("threshold") = py::none(),
          py::arg("limit") = py::none());
    m.def("load_csv", [](const std::filesystem::path& p, const std::string& label) {
        CsvSchema s;
        s.label_column = label;
        return load_csv(p, s);
    }, py::arg("path"), py::arg("label_column") = "label");
    m.def("split_dataset", &split_dataset, py::arg("data"), py::arg("train_fraction"), py::arg("seed"));

    py::class_<MLPModel>(m, "Model")
        .def_static("load", &load_model)
        .def("save", [](const MLPModel& model, const std::filesystem::path& p) { save_model(model, p); })
        .def_property_readonly("layer_sizes", [](const MLPModel& model) { return model.layer_sizes; })
        .def("probabilities", [](const MLPModel& model, const DoubleArray& x) { return forward(model, to_vector(x)).probabilities; })
        .def("predict", [](const MLPModel& model, const DoubleArray& x) { return predict_labels(model, to_matrix(x)); })
        .def("hash", &model_hash);

    m.def(
        "train_mlp",
        [](const Dataset& train, const std::vector<std::size_t>& hidden, const std::string& activation,
           std::size_t epochs, double learning_rate, std::size_t batch_size, double dropout, std::uint64_t seed,
           const Dataset* test) {
            std::vector<std::size_t> sizes{train.dim()};
            sizes.insert(sizes.end(), hidden.begin(), hidden.end());
            sizes.push_back(train.num_classes);
            TrainConfig c;
            c.epochs = epochs;
            c.learning_rate = learning_rate;
            c.batch_size = batch_size;
            c.dropout = dropout;
            c.seed = seed;
            TrainResult r = train_mlp(train, test, sizes, parse_activation(activation), c);
            return py::make_tuple(std::move(r.model), to_python(train_report_to_json(r.report)));
        },
        py::arg("train"), py::arg("hidden"), py::arg("activation") = "sigmoid", py::arg("epochs") = 10,
        py::arg("learning_rate") = 1e-3, py::arg("batch_size") = 32, py::arg("dropout") = 0.0, py::arg("seed") = 1,
        py::arg("test") = nullptr);

    py::class_<MLDStructure>(m, "MLD")
        .def_static("load", &load_mld)
        .def("save", [](const MLDStructure& s, const std::filesystem::path& p) { save_mld(s, p); })
        .def_readonly("layer_sizes", &MLDStructure::layer_sizes)
        .def("decide", [](const MLDStructure& s, const DoubleArray& x) { return forward_decision(s, to_vector(x)).final_label; })
        .def("per_tree_outputs", [](const MLDStructure& s, const DoubleArray& x) { return forward_decision(s, to_vector(x)).per_tree_outputs; })
        .def("predict", [](const MLDStructure& s, const DoubleArray& x) { return predict_labels(s, to_matrix(x)); })
        .def("explain", [](const MLDStructure& s, const DoubleArray& x) {
            const auto input = to_vector(x);
            std::vector<std::string> lines{format_rule(
                backward_rule_induction(s, input, TreeRef::multiclass_output(s.output_layer())), s.output_layer())};
            for (const auto& c : explain_sample(s, input)) lines.push_back(format_rule(c.rules, s.output_layer()));
            return lines;
        })
        .def("to_json", [](const MLDStructure& s) { return to_python(mld_to_json(s)); })
        .def("fit_summary", [](const MLDStructure& s) { return to_python(fit_summary_to_json(s)); });

    m.def(
        "build_mld",
        [](const MLPModel& model, const Dataset& data, std::size_t max_height, std::size_t max_size, bool binarize,
           unsigned threads) {
            BuildOptions o;
            o.fit.max_height = max_height;
            o.fit.max_size = max_size;
            o.policy = binarize ? InputPolicy::binarize() : InputPolicy::passthrough();
            o.threads = threads;
            return build_mld(model, data, o);
        },
        py::arg("model"), py::arg("data"), py::arg("max_height") = 20, py::arg("max_size") = 100,
        py::arg("binarize") = true, py::arg("threads") = 1);

    m.def("evaluate", [](const MLDStructure& s, const MLPModel& model, const Dataset& data, const std::string& split) {
        return to_python(eval_to_json(evaluate(s, model, data, split)));
    }, py::arg("mld"), py::arg("model"), py::arg("data"), py::arg("split") = "test");

    m.def("frequency_importance", [](const MLDStructure& s, const DoubleArray& features, std::optional<std::size_t> target) {
        return to_python(importance_to_json(frequency_importance(s, to_matrix(features), target)));
    }, py::arg("mld"), py::arg("features"), py::arg("target_class") = py::none());

    m.def("oob_importance", [](const MLDStructure& s, const std::vector<int>& reference, const DoubleArray& features,
                               std::uint64_t seed, unsigned threads) {
        return to_python(importance_to_json(oob_importance(s, reference, to_matrix(features), seed, threads)));
    }, py::arg("mld"), py::arg("reference_labels"), py::arg("features"), py::arg("seed") = 5, py::arg("threads") = 1);
}
