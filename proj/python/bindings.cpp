// Python bindings. Arrays cross the boundary as float64 numpy arrays (copied);
// configs cross as JSON strings and are parsed with the same schema as the CLI.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fdnet/config.hpp"
#include "fdnet/data.hpp"
#include "fdnet/errors.hpp"
#include "fdnet/metrics.hpp"
#include "fdnet/model.hpp"
#include "fdnet/trainer.hpp"
#include "fdnet/units.hpp"

namespace py = pybind11;
using namespace fdnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

WeightScheme scheme_by_name(const std::string& name) {
    if (name == "hko") return WeightScheme::hko_rainrate();
    if (name == "srad") return WeightScheme::srad_dbz();
    if (name == "normalized") return WeightScheme::normalized();
    if (name == "uniform") return WeightScheme::uniform();
    throw ConfigError("unknown weight scheme '" + name + "'");
}

py::dict counts_dict(const ConfusionCounts& c) {
    py::dict d;
    d["tp"] = c.tp;
    d["fp"] = c.fp;
    d["tn"] = c.tn;
    d["fn"] = c.fn;
    return d;
}

}  // namespace

PYBIND11_MODULE(_fdnet, m) {
    m.doc() = "FDNet precipitation nowcasting core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("dbz_to_pixel", &dbz_to_pixel, py::arg("dbz"));
    m.def("pixel_to_dbz", &pixel_to_dbz, py::arg("pixel"));
    m.def("dbz_to_rainrate", &dbz_to_rainrate, py::arg("dbz"), py::arg("a") = 58.53, py::arg("b") = 1.56);

    m.def(
        "confusion",
        [](const Array& pred, const Array& target, double threshold) {
            return counts_dict(confusion(to_tensor(pred), to_tensor(target), threshold));
        },
        py::arg("pred"), py::arg("target"), py::arg("threshold"));
    m.def(
        "skill_scores",
        [](std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
            const auto s = skill_scores(ConfusionCounts{tp, fp, tn, fn});
            return py::make_tuple(s.csi, s.hss);
        },
        py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));
    m.def(
        "balanced_errors",
        [](const Array& pred, const Array& target, const std::string& scheme) {
            const auto e = balanced_errors(to_tensor(pred), to_tensor(target), scheme_by_name(scheme));
            return py::make_tuple(e.bmse, e.bmae);
        },
        py::arg("pred"), py::arg("target"), py::arg("scheme") = "normalized");

    m.def("window_count", &window_count, py::arg("length"), py::arg("input_frames"), py::arg("horizon"),
          py::arg("stride") = 1);
    m.def(
        "gen_synthetic",
        [](const std::string& synth_json) {
            const auto cfg = synth_config_from_json(Json::parse(synth_json));
            std::vector<std::pair<std::string, Array>> out;
            for (const auto& s : gen_synthetic(cfg)) out.emplace_back(s.id, to_array(s.frames));
            return out;
        },
        py::arg("synth_json") = "{}");

    m.def(
        "checkpoint_info",
        [](const std::filesystem::path& path) {
            const auto c = load_checkpoint(path);
            py::dict d;
            d["model"] = to_json(c.model).dump();
            d["iteration"] = c.iteration;
            d["best_val_bmse"] = c.best_val_bmse;
            py::dict params;
            for (std::size_t i = 0; i < c.params.size(); ++i) params[py::str(c.params.names()[i])] = to_array(c.params.at(i));
            d["params"] = params;
            return d;
        },
        py::arg("path"));
    m.def(
        "predict",
        [](const std::filesystem::path& checkpoint, const Array& inputs, int horizon) {
            const auto c = load_checkpoint(checkpoint);
            Tensor out;
            {
                py::gil_scoped_release release;
                out = predict(c.model, c.params, to_tensor(inputs), horizon);
            }
            return to_array(out);
        },
        py::arg("checkpoint"), py::arg("inputs"), py::arg("horizon"));
    m.def(
        "predict_random",
        [](const std::string& model_json, std::uint64_t seed, const Array& inputs, int horizon) {
            const auto cfg = model_config_from_json(Json::parse(model_json));
            return to_array(predict(cfg, init_params(cfg, seed), to_tensor(inputs), horizon));
        },
        py::arg("model_json"), py::arg("seed"), py::arg("inputs"), py::arg("horizon"),
        "Prediction with freshly initialized parameters; useful for shape checks.");
}
