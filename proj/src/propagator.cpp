#include "propnet/propagator.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <future>
#include <map>

namespace propnet::propagate {

void PropagationConfig::validate() const {
    if (!(interval_mm > 0.0)) throw ConfigError("propagate.interval_mm: must be positive");
    if (!(tau_fraction > 0.0 && tau_fraction < 1.0)) throw ConfigError("propagate.tau_fraction: must lie in (0, 1)");
    if (max_iterations < 1) throw ConfigError("propagate.max_iterations: must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("propagate.threshold: must lie in (0, 1)");
}

int64_t compute_interval(double spacing_z, double interval_mm) {
    if (!(spacing_z > 0.0)) throw std::invalid_argument("compute_interval: spacing_z must be positive");
    if (!(interval_mm > 0.0)) throw std::invalid_argument("compute_interval: interval_mm must be positive");
    return std::max<int64_t>(1, static_cast<int64_t>(std::floor(interval_mm / spacing_z)));
}

double compute_tau(const MaskSlice& support, double fraction) {
    const int64_t area = count_foreground(support);
    if (area == 0) throw std::invalid_argument("compute_tau: support mask is empty");
    return static_cast<double>(area) * fraction;
}

const char* to_string(Termination t) {
    switch (t) {
        case Termination::area_below_tau: return "area_below_tau";
        case Termination::volume_edge: return "volume_edge";
        case Termination::max_iterations: return "max_iterations";
    }
    return "unknown";
}

namespace {

struct FrontOutput {
    FrontTrace trace;
    std::map<int64_t, MaskSlice> masks;
    std::map<int64_t, int64_t> source;
};

MaskSlice binarize(const Image<float>& prob, double threshold) {
    MaskSlice m(prob.height, prob.width);
    for (std::size_t i = 0; i < prob.size(); ++i) m.data[i] = prob.data[i] >= threshold ? 1 : 0;
    return m;
}

FrontOutput run_front(const SlicePredictor& model, const VolumeScan& vol, int64_t seed_index,
                      const MaskSlice& seed_mask, int direction, int64_t interval, double tau,
                      const PropagationConfig& cfg) {
    const int64_t depth = vol.voxels.depth();
    FrontOutput out;
    out.trace.direction = direction;
    int64_t support = seed_index;
    MaskSlice support_mask = seed_mask;
    for (int iteration = 0;; ++iteration) {
        if (iteration == cfg.max_iterations) {
            out.trace.termination = Termination::max_iterations;
            break;
        }
        const int64_t first = support + direction;
        if (first < 0 || first >= depth) {
            out.trace.termination = Termination::volume_edge;
            break;
        }
        const int64_t last = std::clamp<int64_t>(support + direction * interval, 0, depth - 1);
        FrontStep step;
        step.support_index = support;
        std::vector<Image<float>> queries;
        for (int64_t q = first; q != last + direction; q += direction) {
            step.query_indices.push_back(q);
            queries.push_back(vol.voxels.slice(q));
        }
        const auto probs = model.predict(vol.voxels.slice(support), support_mask, queries);
        if (probs.size() != queries.size()) throw std::runtime_error("propagate: predictor returned wrong batch size");
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i].height != vol.voxels.height() || probs[i].width != vol.voxels.width()) {
                throw ShapeError("propagate: predictor returned wrong slice shape");
            }
            out.masks[step.query_indices[i]] = binarize(probs[i], cfg.threshold);
            out.source[step.query_indices[i]] = support;
        }
        support_mask = out.masks.at(last);
        step.new_support_area = count_foreground(support_mask);
        out.trace.steps.push_back(step);
        if (static_cast<double>(step.new_support_area) < tau) {
            out.trace.termination = Termination::area_below_tau;
            break;
        }
        support = last;
    }
    return out;
}

}  // namespace

PropagationResult propagate(const SlicePredictor& model, const VolumeScan& vol, int64_t seed_index,
                            const MaskSlice& seed_mask, const PropagationConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int64_t depth = vol.voxels.depth();
    if (seed_index < 0 || seed_index >= depth) throw std::out_of_range("propagate: seed index out of range");
    if (seed_mask.height != vol.voxels.height() || seed_mask.width != vol.voxels.width()) {
        throw ShapeError("propagate: seed mask shape does not match volume slices");
    }
    const double tau = compute_tau(seed_mask, cfg.tau_fraction);
    const int64_t interval = compute_interval(vol.spacing.z, cfg.interval_mm);

    FrontOutput toward_start;
    FrontOutput toward_end;
    if (cfg.parallel) {
        auto pending = std::async(std::launch::async, [&] {
            return run_front(model, vol, seed_index, seed_mask, -1, interval, tau, cfg);
        });
        toward_end = run_front(model, vol, seed_index, seed_mask, +1, interval, tau, cfg);
        toward_start = pending.get();
    } else {
        toward_start = run_front(model, vol, seed_index, seed_mask, -1, interval, tau, cfg);
        toward_end = run_front(model, vol, seed_index, seed_mask, +1, interval, tau, cfg);
    }

    PropagationResult r;
    r.seed_index = seed_index;
    r.interval = interval;
    r.tau = tau;
    r.mask3d = MaskVolume{Grid3<uint8_t>(vol.voxels.shape), vol.spacing};
    r.source_support.assign(static_cast<std::size_t>(depth), -1);
    for (const FrontOutput* f : {&toward_start, &toward_end}) {
        for (const auto& [z, m] : f->masks) r.mask3d.voxels.set_slice(z, m);
        for (const auto& [z, s] : f->source) r.source_support[static_cast<std::size_t>(z)] = s;
    }
    r.mask3d.voxels.set_slice(seed_index, seed_mask);
    r.source_support[static_cast<std::size_t>(seed_index)] = seed_index;
    r.fronts = {std::move(toward_start.trace), std::move(toward_end.trace)};
    r.per_slice_area.resize(static_cast<std::size_t>(depth));
    for (int64_t z = 0; z < depth; ++z) r.per_slice_area[static_cast<std::size_t>(z)] = r.mask3d.slice_area(z);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

nlohmann::json PropagationResult::trace_json() const {
    using nlohmann::json;
    json fronts_j = json::array();
    for (const auto& f : fronts) {
        json steps = json::array();
        for (const auto& s : f.steps) {
            steps.push_back(json{{"support_index", s.support_index},
                                 {"query_indices", s.query_indices},
                                 {"new_support_area", s.new_support_area}});
        }
        fronts_j.push_back(json{{"direction", f.direction}, {"steps", steps}, {"termination", to_string(f.termination)}});
    }
    return json{{"seed_index", seed_index},         {"interval", interval},
                {"tau", tau},                       {"per_slice_area", per_slice_area},
                {"source_support", source_support}, {"fronts", fronts_j},
                {"wall_seconds", wall_seconds}};
}

MaskVolume mcc_filter(const MaskVolume& mask, Connectivity connectivity) {
    const auto& g = mask.voxels;
    std::vector<std::array<int64_t, 3>> offsets;
    for (int64_t dz = -1; dz <= 1; ++dz) {
        for (int64_t dy = -1; dy <= 1; ++dy) {
            for (int64_t dx = -1; dx <= 1; ++dx) {
                const int64_t manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
                if (manhattan == 0) continue;
                if (connectivity == Connectivity::c6 && manhattan != 1) continue;
                offsets.push_back({dz, dy, dx});
            }
        }
    }
    std::vector<int32_t> label(g.size(), 0);
    int32_t best_label = 0;
    std::size_t best_size = 0;
    int32_t next = 0;
    std::deque<std::array<int64_t, 3>> queue;
    for (int64_t z = 0; z < g.depth(); ++z) {
        for (int64_t y = 0; y < g.height(); ++y) {
            for (int64_t x = 0; x < g.width(); ++x) {
                if (g(z, y, x) == 0 || label[g.index(z, y, x)] != 0) continue;
                const int32_t id = ++next;
                std::size_t size = 0;
                label[g.index(z, y, x)] = id;
                queue.push_back({z, y, x});
                while (!queue.empty()) {
                    const auto [cz, cy, cx] = queue.front();
                    queue.pop_front();
                    ++size;
                    for (const auto& o : offsets) {
                        const int64_t nz = cz + o[0];
                        const int64_t ny = cy + o[1];
                        const int64_t nx = cx + o[2];
                        if (nz < 0 || ny < 0 || nx < 0 || nz >= g.depth() || ny >= g.height() || nx >= g.width()) {
                            continue;
                        }
                        const auto idx = g.index(nz, ny, nx);
                        if (g.data[idx] == 0 || label[idx] != 0) continue;
                        label[idx] = id;
                        queue.push_back({nz, ny, nx});
                    }
                }
                if (size > best_size) {
                    best_size = size;
                    best_label = id;
                }
            }
        }
    }
    MaskVolume out{Grid3<uint8_t>(g.shape), mask.spacing};
    if (best_label == 0) return out;
    for (std::size_t i = 0; i < label.size(); ++i) out.voxels.data[i] = label[i] == best_label ? 1 : 0;
    return out;
}

MaskVolume assemble_full(const PropagationResult& result, const data::CropRecord& record) {
    return data::uncrop_mask(result.mask3d, record);
}

SegmentationOutput segment_volume(const SlicePredictor& model, const VolumeScan& raw, int64_t seed_index,
                                  const MaskSlice& seed_mask_raw, const data::PreprocessConfig& prep,
                                  const PropagationConfig& cfg) {
    raw.validate();
    if (seed_mask_raw.height != raw.voxels.height() || seed_mask_raw.width != raw.voxels.width()) {
        throw ShapeError("segment: seed mask shape does not match the scan");
    }
    if (seed_index < 0 || seed_index >= raw.voxels.depth()) throw std::out_of_range("segment: seed index out of range");

    const VolumeScan normalized =
        data::normalize(data::resample_xy(raw, std::nullopt, prep.target_xy_spacing).first, prep.normalize_mode);

    MaskVolume seed_vol{Grid3<uint8_t>({1, raw.voxels.height(), raw.voxels.width()}), raw.spacing};
    seed_vol.voxels.set_slice(0, seed_mask_raw);
    const MaskSlice seed_resampled =
        data::resample_mask_to(seed_vol, normalized.voxels.height(), normalized.voxels.width(), normalized.spacing)
            .voxels.slice(0);

    const data::CropRecord rec = data::crop_window(seed_resampled, prep.crop_size);
    const VolumeScan cropped = data::crop_volume(normalized, rec);
    const MaskSlice seed_cropped = data::crop_slice(seed_resampled, rec);

    SegmentationOutput out;
    out.crop = rec;
    out.propagation = propagate(model, cropped, seed_index, seed_cropped, cfg);
    MaskVolume cropped_mask = out.propagation.mask3d;
    if (cfg.mcc) cropped_mask = mcc_filter(cropped_mask, cfg.connectivity);
    const MaskVolume full = data::uncrop_mask(cropped_mask, rec);
    out.mask = data::resample_mask_to(full, raw.voxels.height(), raw.voxels.width(), raw.spacing);
    return out;
}

}  // namespace propnet::propagate
