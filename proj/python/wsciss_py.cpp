#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "wsciss/commands.hpp"
#include "wsciss/config.hpp"
#include "wsciss/errors.hpp"
#include "wsciss/eval.hpp"
#include "wsciss/losses.hpp"
#include "wsciss/protocol.hpp"
#include "wsciss/pseudo_label.hpp"
#include "wsciss/synthetic.hpp"

namespace py = pybind11;
using namespace wsciss;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Tensor3 to_tensor(const DoubleArray& a) {
    if (a.ndim() != 3) throw ValidationError("expected a (C, H, W) array");
    Tensor3 t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

DoubleArray from_tensor(const Tensor3& t) {
    DoubleArray a({t.channels(), t.height(), t.width()});
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

HardLabelMap to_labels(const IntArray& a) {
    if (a.ndim() != 2) throw ValidationError("expected an (H, W) label array");
    return HardLabelMap(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                        std::vector<int>(a.data(), a.data() + a.size()));
}

IntArray from_labels(const HardLabelMap& m) {
    IntArray a({m.height(), m.width()});
    std::copy(m.labels().begin(), m.labels().end(), a.mutable_data());
    return a;
}

LabelMap logits(const DoubleArray& a) { return {to_tensor(a), ScoreKind::logits}; }
LabelMap probs(const DoubleArray& a) { return {to_tensor(a), ScoreKind::probabilities}; }

py::tuple loss_result(const LossValue& v) { return py::make_tuple(v.value, from_tensor(v.grad)); }

nlohmann::json to_json(const py::handle& obj) {
    const auto dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

RunConfig config_from(const py::object& cfg) {
    if (cfg.is_none()) return default_run_config();
    return run_config_from_json(to_json(cfg));
}

py::dict sample_dict(const TrainSample& s) {
    py::dict d;
    d["id"] = s.id();
    d["image"] = from_tensor(s.image.pixels());
    d["labels"] = s.weak_labels.classes();
    if (s.hidden_mask) d["mask"] = from_labels(*s.hidden_mask);
    return d;
}

TrainSample sample_from(const py::dict& d) {
    TrainSample s{Image(to_tensor(d["image"].cast<DoubleArray>()), d["id"].cast<std::string>()),
                  ImageLevelLabels(d["labels"].cast<std::vector<int>>()), std::nullopt};
    if (d.contains("mask") && !d["mask"].is_none()) s.hidden_mask = to_labels(d["mask"].cast<IntArray>());
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Weakly supervised class-incremental semantic segmentation";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<RangeError>(m, "RangeError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<OracleError>(m, "OracleError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<MetricError>(m, "MetricError", base.ptr());
    py::register_exception<MissingArtifactError>(m, "MissingArtifactError", base.ptr());

    m.attr("IGNORE") = kIgnore;

    // pseudo-labels
    m.def(
        "entropy_weights",
        [](const DoubleArray& z, std::optional<int> normalizer) {
            const EntropyWeights w = entropy_weights(logits(z), normalizer);
            DoubleArray out({w.height(), w.width()});
            std::copy(w.values().begin(), w.values().end(), out.mutable_data());
            return out;
        },
        py::arg("logits"), py::arg("normalizer") = py::none());
    m.def(
        "fuse",
        [](const DoubleArray& fdt, const DoubleArray& z) {
            const LabelMap loc = logits(z);
            return from_tensor(fuse(probs(fdt), loc, entropy_weights(loc)).scores());
        },
        py::arg("fdt"), py::arg("logits"), "Entropy-weighted blend of oracle masks and sigmoid(logits).");
    m.def(
        "fuse_pseudo_labels",
        [](const DoubleArray& fdt, const DoubleArray& z, double threshold, bool use_fusion) {
            PseudoLabelOptions o;
            o.background_threshold = threshold;
            o.use_fusion = use_fusion;
            const PseudoLabels pl = fuse_pseudo_labels(probs(fdt), logits(z), o);
            return py::make_tuple(from_tensor(pl.soft.scores()), from_labels(pl.hard));
        },
        py::arg("fdt"), py::arg("logits"), py::arg("background_threshold") = 0.5, py::arg("use_fusion") = true);
    m.def("harden", [](const DoubleArray& p) { return from_labels(harden(probs(p))); }, py::arg("scores"));

    // losses: (value, gradient w.r.t. the first argument)
    m.def("ce_pix", [](const DoubleArray& z, const IntArray& y) { return loss_result(ce_pix(logits(z), to_labels(y))); },
          py::arg("logits"), py::arg("labels"));
    m.def("bce_pix", [](const DoubleArray& z, const DoubleArray& s) { return loss_result(bce_pix(logits(z), probs(s))); },
          py::arg("logits"), py::arg("soft"));
    m.def(
        "bce_img",
        [](const DoubleArray& z, const std::vector<int>& present, const std::vector<int>& supervised) {
            return loss_result(bce_img(logits(z), ImageLevelLabels(present), supervised));
        },
        py::arg("logits"), py::arg("present"), py::arg("supervised"));
    m.def(
        "contrastive",
        [](const DoubleArray& f, const IntArray& y, int samples_per_class, double temperature, std::uint64_t seed) {
            ContrastiveSamplingConfig c;
            c.samples_per_class = samples_per_class;
            c.temperature = temperature;
            c.seed = seed;
            return loss_result(contrastive(to_tensor(f), to_labels(y), c));
        },
        py::arg("features"), py::arg("labels"), py::arg("samples_per_class") = 16, py::arg("temperature") = 0.1,
        py::arg("seed") = 0);
    m.def(
        "kd",
        [](const DoubleArray& f, const DoubleArray& prev, bool average) {
            return loss_result(kd(to_tensor(f), to_tensor(prev), KdConfig{average}));
        },
        py::arg("features"), py::arg("prev_features"), py::arg("average") = true);
    m.def(
        "bce_loc",
        [](const DoubleArray& prev, const DoubleArray& z) { return loss_result(bce_loc(logits(prev), logits(z))); },
        py::arg("prev_logits"), py::arg("logits"));

    // evaluation
    py::class_<ConfusionMatrix>(m, "ConfusionMatrix")
        .def(py::init<int>(), py::arg("num_classes"))
        .def("accumulate",
             [](ConfusionMatrix& cm, const IntArray& gt, const IntArray& pred) {
                 cm.accumulate(to_labels(gt), to_labels(pred));
             })
        .def_property_readonly("num_classes", &ConfusionMatrix::num_classes)
        .def_property_readonly("counts",
                               [](const ConfusionMatrix& cm) {
                                   py::array_t<std::uint64_t> a({cm.num_classes(), cm.num_classes()});
                                   std::copy(cm.counts().begin(), cm.counts().end(), a.mutable_data());
                                   return a;
                               })
        .def("class_iou", [](const ConfusionMatrix& cm) { return class_iou(cm); })
        .def("miou", [](const ConfusionMatrix& cm, const std::vector<int>& group) { return miou(cm, group); },
             py::arg("group"));

    // configuration, corpus and protocol
    m.def("default_config", [] { return from_json(to_json(default_run_config())); });
    m.def(
        "load_config",
        [](const std::string& path, const std::vector<std::string>& overrides) {
            return from_json(to_json(load_run_config(path, overrides)));
        },
        py::arg("path"), py::arg("overrides") = std::vector<std::string>{});
    m.def(
        "generate_synthetic",
        [](const py::object& cfg, int count, std::uint64_t seed, const std::string& prefix) {
            const RunConfig rc = config_from(cfg);
            py::list out;
            for (const auto& s : generate_synthetic(rc.synthetic, rc.schedule, count, seed, prefix)) {
                out.append(sample_dict(s));
            }
            return out;
        },
        py::arg("config") = py::none(), py::arg("count") = 10, py::arg("seed") = 0, py::arg("prefix") = "s");
    m.def(
        "split",
        [](const py::list& samples, const py::object& cfg, int task) {
            const RunConfig rc = config_from(cfg);
            std::vector<TrainSample> full;
            for (const auto& s : samples) full.push_back(sample_from(s.cast<py::dict>()));
            py::list out;
            for (const auto& s : split_dataset(full, {rc.scenario, rc.schedule, rc.seed}, task)) out.append(sample_dict(s));
            return out;
        },
        py::arg("samples"), py::arg("config"), py::arg("task"));

    // CLI commands; each returns its structured result
    m.def(
        "gen_synthetic",
        [](const py::object& cfg) {
            std::ostringstream out;
            cmd_gen_synthetic(config_from(cfg), out);
            return out.str();
        },
        py::arg("config"));
    m.def(
        "train",
        [](const py::object& cfg, std::optional<int> task) {
            std::ostringstream out;
            return from_json(to_json(cmd_train(config_from(cfg), task, out)));
        },
        py::arg("config"), py::arg("task") = py::none());
    m.def(
        "evaluate",
        [](const py::object& cfg, std::optional<int> task) {
            std::ostringstream out;
            return from_json(to_json(cmd_eval(config_from(cfg), task, out)));
        },
        py::arg("config"), py::arg("task") = py::none());
    m.def(
        "ablate",
        [](const py::object& cfg, const std::vector<std::uint64_t>& seeds) {
            std::ostringstream out;
            return from_json(to_json(cmd_ablate(config_from(cfg), seeds, out)));
        },
        py::arg("config"), py::arg("seeds"));
}
