// Python bindings for the core operations: loss primitives, augmentation,
// the network engine, and the high-level train/eval entry points.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <map>
#include <optional>

#include "auginv/augment.hpp"
#include "auginv/commands.hpp"
#include "auginv/config.hpp"
#include "auginv/dataset.hpp"
#include "auginv/errors.hpp"
#include "auginv/evaluator.hpp"
#include "auginv/network.hpp"
#include "auginv/objective.hpp"
#include "auginv/rng.hpp"
#include "auginv/synth.hpp"
#include "auginv/util.hpp"

namespace py = pybind11;
using namespace auginv;

namespace {

using ArrayF = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ArrayD = py::array_t<double, py::array::c_style | py::array::forcecast>;

GroupIndex contiguous_groups(int batch, int m_copies) { return GroupIndex::contiguous(batch, m_copies); }

ArrayF apply_augmentation_py(ArrayF image, const AugmentParams& params) {
    if (image.ndim() != 3) throw ContractError("image must have shape (channels, height, width)");
    const int c = static_cast<int>(image.shape(0));
    const int h = static_cast<int>(image.shape(1));
    const int w = static_cast<int>(image.shape(2));
    ArrayF out({c, h, w});
    apply_augmentation(image.data(), out.mutable_data(), c, h, w, params);
    return out;
}

double invariance_loss_py(ArrayD x, int m_copies, const std::string& variant) {
    if (x.ndim() != 2) throw ContractError("activations must have shape (batch, dim)");
    const int batch = static_cast<int>(x.shape(0));
    GroupIndex groups = GroupIndex::contiguous(batch, m_copies);
    InvarianceVariant v = variant == "group_mean" ? InvarianceVariant::kGroupMean : InvarianceVariant::kVerbatim;
    return invariance_loss(x.data(), batch, x.shape(1), groups, v);
}

ArrayD pairwise_py(ArrayD x) {
    if (x.ndim() != 2) throw ContractError("activations must have shape (batch, dim)");
    const int batch = static_cast<int>(x.shape(0));
    ArrayD out({batch, batch});
    pairwise_mean_sq_dists(x.data(), batch, x.shape(1), out.mutable_data());
    return out;
}

double cross_entropy_py(ArrayD logits, py::array_t<int, py::array::c_style | py::array::forcecast> labels) {
    if (logits.ndim() != 2 || labels.ndim() != 1 || labels.shape(0) != logits.shape(0))
        throw ContractError("expected logits (batch, classes) and labels (batch,)");
    return softmax_cross_entropy(logits.data(), labels.data(), static_cast<int>(logits.shape(0)),
                                 static_cast<int>(logits.shape(1)));
}

double msd_py(ArrayD a, ArrayD b) {
    return mean_sq_distance(std::span<const double>(a.data(), static_cast<size_t>(a.size())),
                            std::span<const double>(b.data(), static_cast<size_t>(b.size())));
}

double invariance_score_py(ArrayF f_x, ArrayF f_gx, ArrayD refs) {
    return invariance_score(std::span<const float>(f_x.data(), static_cast<size_t>(f_x.size())),
                            std::span<const float>(f_gx.data(), static_cast<size_t>(f_gx.size())),
                            std::span<const double>(refs.data(), static_cast<size_t>(refs.size())));
}

// Thin model wrapper holding the float engine.
class Model {
public:
    explicit Model(double width_mult = 1.0) : net_(Architecture::all_cnn_c(width_mult)) {}
    explicit Model(Network<float> net) : net_(std::move(net)) {}

    void init(std::uint64_t seed) { net_.init_params(seed); }
    std::int64_t param_count() const { return net_.arch().param_count(); }
    int num_layers() const { return net_.arch().num_layers(); }

    py::tuple forward(ArrayF batch, const std::vector<int>& want_taps) {
        if (batch.ndim() != 4 || batch.shape(1) != 3 || batch.shape(2) != 32 || batch.shape(3) != 32)
            throw ContractError("batch must have shape (n, 3, 32, 32)");
        const int n = static_cast<int>(batch.shape(0));
        ForwardState<float> state;
        net_.forward(batch.data(), n, state);
        ArrayF logits({n, net_.arch().num_classes()});
        std::memcpy(logits.mutable_data(), state.logits.data(), state.logits.size() * sizeof(float));
        py::dict taps;
        for (int layer : want_taps) {
            if (layer < 0 || layer > net_.arch().num_layers())
                throw ContractError("tap layer out of range");
            const auto dims = net_.arch().dims(layer);
            ArrayF tap({static_cast<std::int64_t>(n), dims.flat()});
            std::memcpy(tap.mutable_data(), state.layer_data(layer),
                        static_cast<size_t>(n) * dims.flat() * sizeof(float));
            taps[py::int_(layer)] = tap;
        }
        return py::make_tuple(logits, taps);
    }

    void save(const std::filesystem::path& path) const { save_checkpoint(net_.arch(), net_.params(), path); }

    static Model load(const std::filesystem::path& path) {
        auto [arch, params] = load_checkpoint(path);
        Network<float> net(arch);
        net.params() = std::move(params);
        return Model(std::move(net));
    }

private:
    Network<float> net_;
};

RunConfig config_from_dict(const py::dict& d) {
    RunConfig cfg;
    for (auto item : d)
        set_config_key(cfg, py::cast<std::string>(item.first), py::cast<std::string>(py::str(item.second)),
                       "config dict");
    cfg.validate();
    return cfg;
}

// Trains one run directory exactly like the CLI train subcommand.
std::string train_run_py(const py::dict& config) {
    RunConfig cfg = config_from_dict(config);
    Dataset data = load_cifar10(cfg.data_dir);
    const std::filesystem::path dir = cfg.run_dir();
    if (std::filesystem::exists(dir / "metrics.csv"))
        throw ConfigError("run directory already holds a run: " + dir.string());
    std::filesystem::create_directories(dir);
    write_text_file(dir / "run.meta", config_snapshot(cfg));
    RunWriter writer(dir, cfg.train.inv_layers);
    train(cfg.train, data, &writer);
    return dir.string();
}

py::dict eval_run_py(const std::filesystem::path& checkpoint, const py::dict& config) {
    RunConfig cfg = config_from_dict(config);
    auto [arch, params] = load_checkpoint(checkpoint);
    Network<float> net(arch);
    net.params() = std::move(params);
    net.threads = cfg.train.threads;
    Dataset data = load_cifar10(cfg.data_dir);
    EvalConfig ecfg;
    ecfg.transforms = cfg.eval_transforms;
    ecfg.references = cfg.eval_references;
    ecfg.seed = cfg.eval_seed;
    ecfg.test_subset = cfg.test_subset;
    ecfg.batch = cfg.eval_batch;
    ecfg.threads = cfg.train.threads;
    ecfg.scheme = cfg.train.scheme;
    InvarianceReport report = evaluate_invariance(net, data.test, data.stats, ecfg);
    py::dict out;
    out["accuracy"] = evaluate_accuracy(net, data.test, data.stats, ecfg.batch, ecfg.test_subset);
    py::dict medians;
    for (const LayerSummary& s : report.summaries) medians[py::int_(s.layer)] = s.median;
    out["median_sigma"] = medians;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "data augmentation invariance: loss primitives, augmentation kernels, and the training engine";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<CheckpointError>(m, "CheckpointError");
    py::register_exception<NumericError>(m, "NumericError");

    py::class_<RngStream>(m, "RngStream")
        .def(py::init<std::uint64_t>())
        .def("uniform01", &RngStream::uniform01)
        .def("normal", &RngStream::normal);

    py::class_<AugmentScheme>(m, "AugmentScheme")
        .def(py::init([](double flip_prob, double rotation_deg, double translate_frac, double scale_delta,
                         double shear_deg, double contrast_delta, double brightness_delta) {
                 AugmentScheme s{flip_prob, rotation_deg, translate_frac, scale_delta,
                                 shear_deg, contrast_delta, brightness_delta};
                 s.validate();
                 return s;
             }),
             py::arg("flip_prob") = 0.5, py::arg("rotation_deg") = 20.0, py::arg("translate_frac") = 0.15,
             py::arg("scale_delta") = 0.2, py::arg("shear_deg") = 15.0, py::arg("contrast_delta") = 0.35,
             py::arg("brightness_delta") = 0.25)
        .def_readonly("flip_prob", &AugmentScheme::flip_prob)
        .def_readonly("rotation_deg", &AugmentScheme::rotation_deg);

    py::class_<AugmentParams>(m, "AugmentParams")
        .def_readonly("flip", &AugmentParams::flip)
        .def_readonly("rotation_deg", &AugmentParams::rotation_deg)
        .def_readonly("translate_x", &AugmentParams::translate_x)
        .def_readonly("translate_y", &AugmentParams::translate_y)
        .def_readonly("scale", &AugmentParams::scale)
        .def_readonly("shear_deg", &AugmentParams::shear_deg)
        .def_readonly("contrast", &AugmentParams::contrast)
        .def_readonly("brightness", &AugmentParams::brightness);

    m.def("sample_train_params", &sample_train_params, py::arg("rng"), py::arg("scheme"));
    m.def("sample_eval_extreme_params", &sample_eval_extreme_params, py::arg("rng"), py::arg("scheme"));
    m.def("apply_augmentation", &apply_augmentation_py, py::arg("image"), py::arg("params"),
          "warp + photometric adjustment of one CHW image in [0,1]");

    m.def("mean_sq_distance", &msd_py, py::arg("a"), py::arg("b"));
    m.def("pairwise_mean_sq_dists", &pairwise_py, py::arg("x"));
    m.def("invariance_loss", &invariance_loss_py, py::arg("x"), py::arg("m_copies"),
          py::arg("variant") = "verbatim");
    m.def("alpha_schedule", [](int layers, double alpha) { return alpha_schedule(layers, alpha).coeffs; },
          py::arg("layers"), py::arg("alpha"));
    m.def("cross_entropy", &cross_entropy_py, py::arg("logits"), py::arg("labels"));
    m.def("total_loss",
          [](double ce, const std::vector<double>& inv, double alpha) {
              AlphaSchedule s = alpha_schedule(static_cast<int>(inv.size()), alpha);
              return total_loss(ce, inv, s);
          },
          py::arg("cross_entropy"), py::arg("inv_losses"), py::arg("alpha"));
    m.def("invariance_score", &invariance_score_py, py::arg("f_x"), py::arg("f_gx"), py::arg("reference_dists"));

    py::class_<Model>(m, "Model")
        .def(py::init<double>(), py::arg("width_mult") = 1.0)
        .def("init", &Model::init, py::arg("seed"))
        .def_property_readonly("param_count", &Model::param_count)
        .def_property_readonly("num_layers", &Model::num_layers)
        .def("forward", &Model::forward, py::arg("batch"), py::arg("want_taps") = std::vector<int>{})
        .def("save", &Model::save, py::arg("path"))
        .def_static("load", &Model::load, py::arg("path"));

    m.def("make_synthetic_dataset", &write_synthetic_cifar10, py::arg("dir"), py::arg("seed") = 7,
          "writes a synthetic dataset in the CIFAR-10 binary layout");
    m.def("train_run", &train_run_py, py::arg("config"), "trains one run directory; returns its path");
    m.def("eval_run", &eval_run_py, py::arg("checkpoint"), py::arg("config"),
          "accuracy and per-layer median invariance scores of a checkpoint");

    m.attr("__version__") = "0.1.0";
}
