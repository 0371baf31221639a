#include "propnet/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace propnet::config {

using nlohmann::json;

namespace {

json tissue_json(const data::Tissue& t) { return json{{"mean", t.mean}, {"stddev", t.stddev}}; }

data::Tissue tissue_from(const json& j) { return {j.at("mean").get<double>(), j.at("stddev").get<double>()}; }

const char* mode_name(data::NormalizeMode m) { return m == data::NormalizeMode::zero ? "zero" : "clip"; }

const char* kernel_name(objectives::ErosionKernel k) {
    return k == objectives::ErosionKernel::square ? "square" : "cross";
}

const char* connectivity_name(propagate::Connectivity c) { return c == propagate::Connectivity::c26 ? "26" : "6"; }

std::string type_name(const json& j) {
    switch (j.type()) {
        case json::value_t::boolean: return "boolean";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return "integer";
        case json::value_t::number_float: return "number";
        case json::value_t::string: return "string";
        case json::value_t::array: return "array";
        case json::value_t::object: return "object";
        default: return "null";
    }
}

bool compatible(const json& expected, const json& given) {
    if (expected.is_number_integer() || expected.is_number_unsigned()) {
        return given.is_number_integer() || given.is_number_unsigned();
    }
    if (expected.is_number_float()) return given.is_number();
    return expected.type() == given.type();
}

// Overlays `given` onto `defaults`, rejecting unknown keys and mismatched types.
void overlay(json& defaults, const json& given, const std::string& path) {
    if (!given.is_object()) {
        throw ConfigError("config" + (path.empty() ? std::string() : " key '" + path + "'") +
                          ": expected object, got " + type_name(given));
    }
    for (const auto& [key, value] : given.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!defaults.contains(key)) throw ConfigError("config: unknown key '" + full + "'");
        json& slot = defaults[key];
        if (slot.is_object()) {
            overlay(slot, value, full);
            continue;
        }
        if (slot.is_array()) {
            if (!value.is_array()) {
                throw ConfigError("config key '" + full + "': expected array, got " + type_name(value));
            }
            if (!slot.empty()) {
                for (const auto& v : value) {
                    if (!compatible(slot.front(), v)) {
                        throw ConfigError("config key '" + full + "': expected array of " + type_name(slot.front()) +
                                          ", got element of type " + type_name(v));
                    }
                }
            }
            slot = value;
            continue;
        }
        if (!compatible(slot, value)) {
            throw ConfigError("config key '" + full + "': expected " + type_name(slot) + ", got " + type_name(value));
        }
        slot = value;
    }
}

template <class T, std::size_t N>
std::array<T, N> fixed_array(const json& j, const char* key) {
    if (!j.is_array() || j.size() != N) {
        throw ConfigError(std::string("config key '") + key + "': expected array of length " + std::to_string(N));
    }
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<T>();
    return out;
}

template <class E>
E enum_from(const json& j, const char* key, std::initializer_list<std::pair<const char*, E>> options) {
    const auto s = j.get<std::string>();
    std::string allowed;
    for (const auto& [name, value] : options) {
        if (s == name) return value;
        allowed += allowed.empty() ? name : std::string("|") + name;
    }
    throw ConfigError(std::string("config key '") + key + "': expected one of " + allowed + ", got '" + s + "'");
}

json parse_scalar(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return json(text);
    }
}

}  // namespace

void RunConfig::validate() const {
    data.phantom.validate();
    if (!(data.preprocess.target_xy_spacing > 0.0)) throw ConfigError("data.target_xy_spacing: must be positive");
    if (data.preprocess.crop_size != model.input_size) {
        throw ConfigError("data.crop_size: must equal model.input_size");
    }
    if (data.train_count < 1 || data.val_count < 1) throw ConfigError("data.train_count/val_count: must be >= 1");
    model.validate();
    train.validate();
    propagate.validate();
    for (double t : evaluate.tolerances_mm) {
        if (!(t >= 0.0)) throw ConfigError("evaluate.tolerances_mm: must be nonnegative");
    }
    if (ablate.timing_repeats < 1) throw ConfigError("ablate.timing_repeats: must be >= 1");
}

json to_json(const RunConfig& c) {
    const auto& p = c.data.phantom;
    json data{{"shape", p.shape},
              {"spacing_mm", {p.spacing.z, p.spacing.y, p.spacing.x}},
              {"ring_radius", p.ring_radius},
              {"wall_thickness", p.wall_thickness},
              {"tumor_thickness", p.tumor_thickness},
              {"angular_extent_deg", p.angular_extent_deg},
              {"tumor_slices", p.tumor_slices},
              {"jitter", p.jitter},
              {"blur", p.blur},
              {"background", tissue_json(p.background)},
              {"lumen", tissue_json(p.lumen)},
              {"wall", tissue_json(p.wall)},
              {"tumor", tissue_json(p.tumor)},
              {"organ", tissue_json(p.organ)},
              {"target_xy_spacing", c.data.preprocess.target_xy_spacing},
              {"normalize_mode", mode_name(c.data.preprocess.normalize_mode)},
              {"crop_size", c.data.preprocess.crop_size},
              {"train_count", c.data.train_count},
              {"val_count", c.data.val_count},
              {"train_dir", c.data.train_dir},
              {"val_dir", c.data.val_dir}};
    const auto& m = c.model;
    json model{{"input_size", m.input_size},
               {"base_channels", m.base_channels},
               {"stage_blocks", m.stage_blocks},
               {"dilation_rates", m.dilation_rates},
               {"psp_scales", m.psp_scales},
               {"context_paths", m.context_paths},
               {"leak_slope", m.leak_slope},
               {"boundary_branch_enabled", m.boundary_branch_enabled},
               {"refining_stage_enabled", m.refining_stage_enabled},
               {"stop_gradient", m.stop_gradient}};
    const auto& t = c.train;
    json train{{"epochs", t.epochs},
               {"initial_lr", t.schedule.initial_lr},
               {"t0", t.schedule.t0},
               {"t_mult", t.schedule.t_mult},
               {"eta_min", t.schedule.eta_min},
               {"loss_adjusting_factor", t.loss_adjusting_factor},
               {"batch_size", t.batch_size},
               {"supports_per_volume", t.supports_per_volume},
               {"validate_every", t.validate_every},
               {"checkpoint_every", t.checkpoint_every},
               {"grad_clip", t.grad_clip},
               {"erosion_kernel_size", t.erosion_kernel_size},
               {"erosion_kernel", kernel_name(t.erosion_kernel)},
               {"deterministic", t.deterministic},
               {"threads", t.threads}};
    const auto& g = c.propagate;
    json prop{{"interval_mm", g.interval_mm},
              {"tau_fraction", g.tau_fraction},
              {"parallel", g.parallel},
              {"max_iterations", g.max_iterations},
              {"threshold", g.threshold},
              {"mcc", g.mcc},
              {"connectivity", connectivity_name(g.connectivity)}};
    json evaluate{{"tolerances_mm", c.evaluate.tolerances_mm}};
    json ablate{{"deviations_mm", c.ablate.deviations_mm},
                {"intervals_mm", c.ablate.intervals_mm},
                {"timing_repeats", c.ablate.timing_repeats}};
    return json{{"data", data},         {"model", model},   {"train", train},
                {"propagate", prop},    {"evaluate", evaluate}, {"ablate", ablate},
                {"seed", c.seed},       {"output_dir", c.output_dir}};
}

RunConfig from_json(const json& given) {
    json full = to_json(RunConfig{});
    overlay(full, given, "");
    RunConfig c;
    try {
        const auto& d = full.at("data");
        auto& p = c.data.phantom;
        p.shape = fixed_array<int64_t, 3>(d.at("shape"), "data.shape");
        const auto sp = fixed_array<double, 3>(d.at("spacing_mm"), "data.spacing_mm");
        p.spacing = {sp[0], sp[1], sp[2]};
        p.ring_radius = fixed_array<double, 2>(d.at("ring_radius"), "data.ring_radius");
        p.wall_thickness = d.at("wall_thickness").get<double>();
        p.tumor_thickness = fixed_array<double, 2>(d.at("tumor_thickness"), "data.tumor_thickness");
        p.angular_extent_deg = fixed_array<double, 2>(d.at("angular_extent_deg"), "data.angular_extent_deg");
        p.tumor_slices = fixed_array<int64_t, 2>(d.at("tumor_slices"), "data.tumor_slices");
        p.jitter = d.at("jitter").get<double>();
        p.blur = d.at("blur").get<double>();
        p.background = tissue_from(d.at("background"));
        p.lumen = tissue_from(d.at("lumen"));
        p.wall = tissue_from(d.at("wall"));
        p.tumor = tissue_from(d.at("tumor"));
        p.organ = tissue_from(d.at("organ"));
        c.data.preprocess.target_xy_spacing = d.at("target_xy_spacing").get<double>();
        c.data.preprocess.normalize_mode = enum_from<data::NormalizeMode>(
            d.at("normalize_mode"), "data.normalize_mode",
            {{"zero", data::NormalizeMode::zero}, {"clip", data::NormalizeMode::clip}});
        c.data.preprocess.crop_size = d.at("crop_size").get<int64_t>();
        c.data.train_count = d.at("train_count").get<int64_t>();
        c.data.val_count = d.at("val_count").get<int64_t>();
        c.data.train_dir = d.at("train_dir").get<std::string>();
        c.data.val_dir = d.at("val_dir").get<std::string>();

        const auto& m = full.at("model");
        c.model.input_size = m.at("input_size").get<int64_t>();
        c.model.base_channels = m.at("base_channels").get<int64_t>();
        c.model.stage_blocks = fixed_array<int64_t, 4>(m.at("stage_blocks"), "model.stage_blocks");
        c.model.dilation_rates = m.at("dilation_rates").get<std::vector<int64_t>>();
        c.model.psp_scales = m.at("psp_scales").get<std::vector<int64_t>>();
        c.model.context_paths = m.at("context_paths").get<int64_t>();
        c.model.leak_slope = m.at("leak_slope").get<double>();
        c.model.boundary_branch_enabled = m.at("boundary_branch_enabled").get<bool>();
        c.model.refining_stage_enabled = m.at("refining_stage_enabled").get<bool>();
        c.model.stop_gradient = m.at("stop_gradient").get<bool>();

        const auto& t = full.at("train");
        c.train.epochs = t.at("epochs").get<int64_t>();
        c.train.schedule.initial_lr = t.at("initial_lr").get<double>();
        c.train.schedule.t0 = t.at("t0").get<double>();
        c.train.schedule.t_mult = t.at("t_mult").get<double>();
        c.train.schedule.eta_min = t.at("eta_min").get<double>();
        c.train.loss_adjusting_factor = t.at("loss_adjusting_factor").get<double>();
        c.train.batch_size = t.at("batch_size").get<int64_t>();
        c.train.supports_per_volume = t.at("supports_per_volume").get<int64_t>();
        c.train.validate_every = t.at("validate_every").get<int64_t>();
        c.train.checkpoint_every = t.at("checkpoint_every").get<int64_t>();
        c.train.grad_clip = t.at("grad_clip").get<double>();
        c.train.erosion_kernel_size = t.at("erosion_kernel_size").get<int>();
        c.train.erosion_kernel = enum_from<objectives::ErosionKernel>(
            t.at("erosion_kernel"), "train.erosion_kernel",
            {{"square", objectives::ErosionKernel::square}, {"cross", objectives::ErosionKernel::cross}});
        c.train.deterministic = t.at("deterministic").get<bool>();
        c.train.threads = t.at("threads").get<int64_t>();

        const auto& g = full.at("propagate");
        c.propagate.interval_mm = g.at("interval_mm").get<double>();
        c.propagate.tau_fraction = g.at("tau_fraction").get<double>();
        c.propagate.parallel = g.at("parallel").get<bool>();
        c.propagate.max_iterations = g.at("max_iterations").get<int>();
        c.propagate.threshold = g.at("threshold").get<double>();
        c.propagate.mcc = g.at("mcc").get<bool>();
        c.propagate.connectivity = enum_from<propagate::Connectivity>(
            g.at("connectivity"), "propagate.connectivity",
            {{"26", propagate::Connectivity::c26}, {"6", propagate::Connectivity::c6}});

        c.evaluate.tolerances_mm = full.at("evaluate").at("tolerances_mm").get<std::vector<double>>();
        const auto& a = full.at("ablate");
        c.ablate.deviations_mm = a.at("deviations_mm").get<std::vector<double>>();
        c.ablate.intervals_mm = a.at("intervals_mm").get<std::vector<double>>();
        c.ablate.timing_repeats = a.at("timing_repeats").get<int64_t>();
        c.seed = full.at("seed").get<uint64_t>();
        c.output_dir = full.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string fingerprint(const RunConfig& cfg) {
    const std::string canonical = to_json(cfg).dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

RunConfig parse_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides,
                       bool use_env) {
    json given = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("config: cannot open " + path->string());
        const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            try {
                given = json::parse(text);
            } catch (const json::exception& e) {
                throw ConfigError("config: " + path->string() + ": " + e.what());
            }
        }
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("config: override '" + o + "' is not key=value");
        const std::string key = o.substr(0, eq);
        json* node = &given;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (part.empty()) throw ConfigError("config: malformed override key '" + key + "'");
            if (dot == std::string::npos) {
                (*node)[part] = parse_scalar(o.substr(eq + 1));
                break;
            }
            json& child = (*node)[part];
            if (!child.is_object()) child = json::object();
            node = &child;
            start = dot + 1;
        }
    }
    if (use_env) {
        if (const char* env = std::getenv("PROPNET_SEED"); env != nullptr && *env != '\0') {
            try {
                given["seed"] = std::stoull(env);
            } catch (const std::exception&) {
                throw ConfigError(std::string("PROPNET_SEED: expected unsigned integer, got '") + env + "'");
            }
        }
    }
    return from_json(given);
}

uint64_t phantom_seed(const RunConfig& cfg, bool validation, int64_t index) {
    const uint64_t base = cfg.seed * 1000003ULL + (validation ? 500000ULL : 0ULL);
    return base + static_cast<uint64_t>(index);
}

}  // namespace propnet::config
