#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "propnet/config.hpp"
#include "propnet/data.hpp"
#include "propnet/dataset.hpp"
#include "propnet/metrics.hpp"
#include "propnet/nn/predictor.hpp"
#include "propnet/nn/trainer.hpp"
#include "propnet/objectives.hpp"
#include "propnet/propagator.hpp"

namespace py = pybind11;
using namespace propnet;

namespace {

using Spacing3 = std::tuple<double, double, double>;

Spacing to_spacing(const Spacing3& s) { return {std::get<0>(s), std::get<1>(s), std::get<2>(s)}; }
Spacing3 from_spacing(const Spacing& s) { return {s.z, s.y, s.x}; }

template <class T>
Grid3<T> grid_from(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, const char* what) {
    if (a.ndim() != 3) throw ShapeError(std::string(what) + ": expected a 3-D array (z, y, x)");
    Grid3<T> g({a.shape(0), a.shape(1), a.shape(2)});
    std::memcpy(g.data.data(), a.data(), g.size() * sizeof(T));
    return g;
}

template <class T>
py::array_t<T> to_array(const Grid3<T>& g) {
    py::array_t<T> a({g.shape[0], g.shape[1], g.shape[2]});
    std::memcpy(a.mutable_data(), g.data.data(), g.size() * sizeof(T));
    return a;
}

template <class T>
Image<T> image_from(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, const char* what) {
    if (a.ndim() != 2) throw ShapeError(std::string(what) + ": expected a 2-D array (y, x)");
    Image<T> im(a.shape(0), a.shape(1));
    std::memcpy(im.data.data(), a.data(), im.size() * sizeof(T));
    return im;
}

template <class T>
py::array_t<T> to_array(const Image<T>& im) {
    py::array_t<T> a({im.height, im.width});
    std::memcpy(a.mutable_data(), im.data.data(), im.size() * sizeof(T));
    return a;
}

MaskVolume mask_from(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a, const Spacing3& s) {
    MaskVolume m{grid_from<uint8_t>(a, "mask"), to_spacing(s)};
    for (auto& v : m.voxels.data) v = v != 0 ? 1 : 0;
    return m;
}

config::RunConfig cfg_from(const std::string& text) {
    return config::from_json(nlohmann::json::parse(text));
}

model::Head parse_head(const std::string& name) {
    if (name == "proposing_region") return model::Head::proposing_region;
    if (name == "proposing_composite") return model::Head::proposing_composite;
    if (name == "refining_composite") return model::Head::refining_composite;
    throw ConfigError("head: unknown '" + name + "'");
}

/// Holds a loaded network for repeated segmentation calls.
class Segmenter {
public:
    Segmenter(const std::filesystem::path& ckpt, const std::optional<std::string>& head)
        : net_(train::load_network(ckpt)),
          predictor_(net_, head ? parse_head(*head) : model::default_head(net_->config())) {}

    py::dict segment(const py::array_t<float, py::array::c_style | py::array::forcecast>& volume,
                     const Spacing3& spacing, int64_t seed_index,
                     const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& seed_mask,
                     const std::string& cfg_json) const {
        const auto cfg = cfg_from(cfg_json);
        VolumeScan vol{grid_from<float>(volume, "volume"), to_spacing(spacing), "python"};
        auto seed = image_from<uint8_t>(seed_mask, "seed_mask");
        for (auto& v : seed.data) v = v != 0 ? 1 : 0;
        propagate::SegmentationOutput out;
        {
            py::gil_scoped_release release;
            out = propagate::segment_volume(predictor_, vol, seed_index, seed, cfg.data.preprocess, cfg.propagate);
        }
        py::dict d;
        d["mask"] = to_array(out.mask.voxels);
        d["trace"] = out.propagation.trace_json().dump();
        return d;
    }

private:
    model::PropNet net_;
    model::NetworkPredictor predictor_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the propnet package";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    m.def("default_config", [] { return config::to_json(config::RunConfig{}).dump(); });
    m.def(
        "load_config",
        [](std::optional<std::filesystem::path> path, std::vector<std::string> overrides) {
            return config::to_json(config::parse_config(path, overrides, false)).dump();
        },
        py::arg("path") = std::nullopt, py::arg("overrides") = std::vector<std::string>{});
    m.def("canonical_config", [](const std::string& text) { return config::to_json(cfg_from(text)).dump(); });
    m.def("fingerprint", [](const std::string& text) { return config::fingerprint(cfg_from(text)); });

    m.def(
        "synth_phantom",
        [](const std::string& cfg_json, bool validation, int64_t index) {
            const auto cfg = cfg_from(cfg_json);
            auto cases = data::generate_cases(cfg, validation, index + 1);
            const auto& c = cases.back();
            return py::make_tuple(to_array(c.volume.voxels), to_array(c.mask.voxels), from_spacing(c.volume.spacing));
        },
        py::arg("config"), py::arg("validation") = false, py::arg("index") = 0);

    m.def(
        "normalize_value",
        [](float hu, const std::string& mode) {
            return data::normalize_value(hu, mode == "clip" ? data::NormalizeMode::clip : data::NormalizeMode::zero);
        },
        py::arg("hu"), py::arg("mode") = "zero");
    m.def("largest_slice", [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& mask) {
        return data::largest_slice(mask_from(mask, {1.0, 1.0, 1.0}));
    });

    m.def("stage_weights", [](double epoch, double factor) {
        const auto w = objectives::stage_weights(epoch, factor);
        return py::make_tuple(w.w, w.w_prime);
    });
    m.def(
        "boundary_gt",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& y, int kernel_size,
           const std::string& kernel) {
            const auto k = kernel == "cross" ? objectives::ErosionKernel::cross : objectives::ErosionKernel::square;
            return to_array(objectives::boundary_gt(image_from<uint8_t>(y, "mask"), kernel_size, k));
        },
        py::arg("mask"), py::arg("kernel_size") = 9, py::arg("kernel") = "square");
    m.def(
        "lr_at",
        [](double epoch, double initial_lr, double t0, double t_mult, double eta_min) {
            return train::lr_at(epoch, train::LrSchedule{initial_lr, t0, t_mult, eta_min});
        },
        py::arg("epoch"), py::arg("initial_lr") = 1e-3, py::arg("t0") = 40.0, py::arg("t_mult") = 2.0,
        py::arg("eta_min") = 5e-6);

    m.def("compute_interval", &propagate::compute_interval, py::arg("spacing_z"), py::arg("interval_mm") = 20.0);
    m.def(
        "compute_tau",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& support, double fraction) {
            return propagate::compute_tau(image_from<uint8_t>(support, "support"), fraction);
        },
        py::arg("support"), py::arg("fraction") = 1.0 / 20.0);
    m.def(
        "mcc_filter",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& mask, int connectivity) {
            if (connectivity != 6 && connectivity != 26) throw ConfigError("connectivity: expected 6 or 26");
            const auto c = connectivity == 6 ? propagate::Connectivity::c6 : propagate::Connectivity::c26;
            return to_array(propagate::mcc_filter(mask_from(mask, {1.0, 1.0, 1.0}), c).voxels);
        },
        py::arg("mask"), py::arg("connectivity") = 26);

    using U8 = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
    m.def("dsc", [](const U8& a, const U8& b) { return metrics::dsc(mask_from(a, {1, 1, 1}), mask_from(b, {1, 1, 1})); });
    m.def("ji", [](const U8& a, const U8& b) { return metrics::ji(mask_from(a, {1, 1, 1}), mask_from(b, {1, 1, 1})); });
    m.def(
        "surface_dice",
        [](const U8& a, const U8& b, double tolerance_mm, const Spacing3& spacing) {
            return metrics::surface_dice(mask_from(a, spacing), mask_from(b, spacing), tolerance_mm,
                                         to_spacing(spacing));
        },
        py::arg("a"), py::arg("b"), py::arg("tolerance_mm"), py::arg("spacing"));
    m.def("paired_t_test", [](const std::vector<double>& x, const std::vector<double>& y) {
        const auto r = metrics::paired_t_test(x, y);
        return py::make_tuple(r.t, r.p);
    });

    m.def(
        "train",
        [](const std::string& cfg_json, const std::filesystem::path& out_dir, std::optional<int64_t> stop_after) {
            const auto cfg = cfg_from(cfg_json);
            train::TrainOptions opts;
            opts.stop_after = stop_after;
            train::TrainResult r;
            {
                py::gil_scoped_release release;
                r = train::train(cfg, out_dir, opts);
            }
            py::list history;
            for (const auto& e : r.history) history.append(e.to_json().dump());
            py::dict d;
            d["last_checkpoint"] = r.last_checkpoint;
            d["best_checkpoint"] = r.best_checkpoint;
            d["best_val_dsc"] = r.best_val_dsc;
            d["wall_seconds"] = r.wall_seconds;
            d["history"] = history;
            return d;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("stop_after") = std::nullopt);

    py::class_<Segmenter>(m, "Segmenter")
        .def(py::init<const std::filesystem::path&, const std::optional<std::string>&>(), py::arg("checkpoint"),
             py::arg("head") = std::nullopt)
        .def("segment", &Segmenter::segment, py::arg("volume"), py::arg("spacing"), py::arg("seed_index"),
             py::arg("seed_mask"), py::arg("config"));
}
