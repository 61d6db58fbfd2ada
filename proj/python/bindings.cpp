#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aarr/attention.hpp"
#include "aarr/gradcheck.hpp"
#include "aarr/io.hpp"
#include "aarr/metrics.hpp"
#include "aarr/trainer.hpp"

namespace py = pybind11;
using namespace aarr;

namespace {

nlohmann::json to_nl(const py::object& o) {
    const auto text = py::module_::import("json").attr("dumps")(o).cast<std::string>();
    return nlohmann::json::parse(text);
}

py::object from_nl(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

template <class T>
T parse_as(const py::object& o) {
    T value;
    if (!o.is_none()) from_json(to_nl(o), value);
    return value;
}

py::array_t<double> to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict metrics_dict(const GzslMetrics& m) { return from_nl(to_json(m)); }

py::list history_list(const std::vector<EpochRecord>& history) {
    py::list out;
    for (const auto& r : history) {
        py::dict d;
        d["epoch"] = r.epoch;
        d["phase"] = r.main_phase ? "main" : "warmup";
        d["ce"] = r.losses.ce;
        d["uad"] = r.losses.uad;
        d["agl"] = r.losses.agl;
        d["total"] = r.losses.total;
        d["T"] = r.metrics.T;
        d["U"] = r.metrics.U;
        d["S"] = r.metrics.S;
        d["H"] = r.metrics.H;
        out.append(d);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_aarr, m) {
    m.doc() = "Attribute-region GZSL trainer with distillation and attribute-pool regularization";

    py::register_exception<io::FormatError>(m, "FormatError", PyExc_IOError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

    py::class_<GzslDataset>(m, "Dataset")
        .def_property_readonly("name", [](const GzslDataset& d) { return d.name; })
        .def_property_readonly("num_classes", &GzslDataset::num_classes)
        .def_property_readonly("num_samples", &GzslDataset::num_samples)
        .def_property_readonly("num_attributes", &GzslDataset::num_attributes)
        .def_property_readonly("descriptors", [](const GzslDataset& d) { return to_numpy(d.descriptors); })
        .def_property_readonly("attributes", [](const GzslDataset& d) { return to_numpy(d.attributes); })
        .def_property_readonly("embeddings", [](const GzslDataset& d) { return to_numpy(d.embeddings); })
        .def_property_readonly("labels", [](const GzslDataset& d) { return d.labels; })
        .def_property_readonly("splits",
                               [](const GzslDataset& d) {
                                   std::vector<int> s;
                                   for (auto x : d.split) s.push_back(static_cast<int>(x));
                                   return s;
                               })
        .def_property_readonly("unseen_classes",
                               [](const GzslDataset& d) { return d.classes_of(ClassKind::unseen); })
        .def_property_readonly("ground_truth_regions", [](const GzslDataset& d) { return d.ground_truth_regions; })
        .def("validate", [](const GzslDataset& d) {
            py::list out;
            for (const auto& v : validate_dataset(d)) out.append(py::make_tuple(v.invariant, v.index, v.message));
            return out;
        });

    m.def(
        "generate", [](const py::object& spec) { return generate_synthetic(parse_as<SyntheticSpec>(spec)); },
        py::arg("spec") = py::none(), "Synthetic dataset from a spec dict; missing keys keep their defaults.");
    m.def("default_spec", [] { return from_nl(nlohmann::json(SyntheticSpec{})); });
    m.def("default_config", [] { return from_nl(nlohmann::json(TrainConfig{})); });
    m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("path"));
    m.def("read_dataset", &read_dataset, py::arg("path"));

    m.def(
        "fit",
        [](const GzslDataset& d, const py::object& config, std::optional<std::filesystem::path> checkpoint_dir) {
            const TrainConfig c = parse_as<TrainConfig>(config);
            c.validate();
            FitOptions opt;
            opt.checkpoint_dir = checkpoint_dir;
            FitResult r;
            {
                py::gil_scoped_release release;
                r = fit(d, c, opt);
            }
            return history_list(r.history);
        },
        py::arg("dataset"), py::arg("config") = py::none(), py::arg("checkpoint_dir") = py::none(),
        "Trains and returns the per-epoch history as a list of dicts.");

    m.def(
        "evaluate",
        [](const std::filesystem::path& checkpoint, const GzslDataset& d, bool teacher) {
            const Checkpoint ck = load_checkpoint(checkpoint);
            return metrics_dict(evaluate(eval_model(ck.state, teacher), d));
        },
        py::arg("checkpoint"), py::arg("dataset"), py::arg("teacher") = false);

    m.def(
        "attention",
        [](const std::filesystem::path& checkpoint, const GzslDataset& d, std::size_t sample) {
            const Checkpoint ck = load_checkpoint(checkpoint);
            const auto sets = uad::build_similarity_sets(d.attributes, d.classes_of(ClassKind::seen),
                                                         d.classes_of(ClassKind::unseen), ck.config.m);
            const AttentionExport e = attention_for_sample(ck.state, d, sample, sets);
            return py::make_tuple(to_numpy(e.scores), e.region_weight);
        },
        py::arg("checkpoint"), py::arg("dataset"), py::arg("sample"),
        "Attribute-region scores (n x r) and region weights (r) for one sample.");

    m.def(
        "gradcheck",
        [](std::uint64_t seed) {
            GradcheckOptions opt;
            opt.seed = seed;
            const GradcheckReport rep = run_gradcheck(opt);
            py::dict out;
            for (const auto& t : rep.terms) out[py::str(t.name)] = t.worst_rel_error;
            return py::make_tuple(rep.passed, out);
        },
        py::arg("seed") = 0);

    m.def("harmonic_mean", &harmonic_mean, py::arg("seen"), py::arg("unseen"));
    m.def(
        "metrics_from_predictions",
        [](std::vector<std::size_t> labels, std::vector<std::size_t> gzsl, std::vector<std::size_t> zsl,
           const std::vector<bool>& unseen) {
            if (gzsl.size() != labels.size() || zsl.size() != labels.size() || unseen.size() != labels.size())
                throw std::invalid_argument("metrics_from_predictions: all lists must have the same length");
            PredictionSet p;
            p.labels = std::move(labels);
            p.gzsl = std::move(gzsl);
            p.zsl = std::move(zsl);
            for (bool u : unseen) p.split.push_back(u ? Split::test_unseen : Split::test_seen);
            return metrics_dict(compute_metrics(p));
        },
        py::arg("labels"), py::arg("gzsl"), py::arg("zsl"), py::arg("is_unseen"),
        "Per-class T/U/S/H from test predictions; zsl entries are ignored for seen samples.");

    m.def("read_tensor", [](const std::filesystem::path& p) { return to_numpy(io::read_tensor(p)); });
    m.def(
        "write_tensor",
        [](const std::filesystem::path& p, const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
            io::write_tensor(p, from_numpy(a));
        },
        py::arg("path"), py::arg("array"));
}
