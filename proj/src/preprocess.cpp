#include <algorithm>
#include <cmath>

#include "propnet/data.hpp"

namespace propnet::data {

namespace {

constexpr int64_t kMinResampledSize = 8;

int64_t resampled_size(int64_t n, double spacing, double target) {
    return static_cast<int64_t>(std::lround(static_cast<double>(n) * spacing / target));
}

struct LinearTap {
    int64_t i0 = 0;
    int64_t i1 = 0;
    double frac = 0.0;
};

// Pixel-centre aligned source coordinates for each output index.
std::vector<LinearTap> linear_taps(int64_t n_out, int64_t n_in, double step) {
    std::vector<LinearTap> taps(static_cast<std::size_t>(n_out));
    for (int64_t j = 0; j < n_out; ++j) {
        const double src = std::clamp((static_cast<double>(j) + 0.5) * step - 0.5, 0.0,
                                      static_cast<double>(n_in - 1));
        auto& t = taps[static_cast<std::size_t>(j)];
        t.i0 = static_cast<int64_t>(std::floor(src));
        t.i1 = std::min(t.i0 + 1, n_in - 1);
        t.frac = src - static_cast<double>(t.i0);
    }
    return taps;
}

std::vector<int64_t> nearest_taps(int64_t n_out, int64_t n_in, double step) {
    std::vector<int64_t> taps(static_cast<std::size_t>(n_out));
    for (int64_t j = 0; j < n_out; ++j) {
        const auto i = static_cast<int64_t>(std::floor((static_cast<double>(j) + 0.5) * step));
        taps[static_cast<std::size_t>(j)] = std::clamp<int64_t>(i, 0, n_in - 1);
    }
    return taps;
}

Grid3<uint8_t> nearest_resample(const Grid3<uint8_t>& in, int64_t out_h, int64_t out_w, double step_y,
                                double step_x) {
    const auto ty = nearest_taps(out_h, in.height(), step_y);
    const auto tx = nearest_taps(out_w, in.width(), step_x);
    Grid3<uint8_t> out({in.depth(), out_h, out_w});
    for (int64_t z = 0; z < in.depth(); ++z) {
        for (int64_t y = 0; y < out_h; ++y) {
            for (int64_t x = 0; x < out_w; ++x) {
                out(z, y, x) = in(z, ty[static_cast<std::size_t>(y)], tx[static_cast<std::size_t>(x)]);
            }
        }
    }
    return out;
}

}  // namespace

std::pair<VolumeScan, std::optional<MaskVolume>> resample_xy(const VolumeScan& vol,
                                                              const std::optional<MaskVolume>& mask,
                                                              double target_xy_spacing) {
    if (!(target_xy_spacing > 0.0)) throw ConfigError("resample: target spacing must be positive");
    if (mask && mask->voxels.shape != vol.voxels.shape) throw ShapeError("resample: mask/volume shape mismatch");

    const int64_t out_h = resampled_size(vol.voxels.height(), vol.spacing.y, target_xy_spacing);
    const int64_t out_w = resampled_size(vol.voxels.width(), vol.spacing.x, target_xy_spacing);
    if (out_h < kMinResampledSize || out_w < kMinResampledSize) {
        throw ShapeError("resample: degenerate output size " + std::to_string(out_h) + "x" +
                         std::to_string(out_w));
    }
    const double step_y = target_xy_spacing / vol.spacing.y;
    const double step_x = target_xy_spacing / vol.spacing.x;
    const auto ty = linear_taps(out_h, vol.voxels.height(), step_y);
    const auto tx = linear_taps(out_w, vol.voxels.width(), step_x);

    VolumeScan out;
    out.id = vol.id;
    out.spacing = {vol.spacing.z, target_xy_spacing, target_xy_spacing};
    out.voxels = Grid3<float>({vol.voxels.depth(), out_h, out_w});
    for (int64_t z = 0; z < vol.voxels.depth(); ++z) {
        for (int64_t y = 0; y < out_h; ++y) {
            const auto& a = ty[static_cast<std::size_t>(y)];
            for (int64_t x = 0; x < out_w; ++x) {
                const auto& b = tx[static_cast<std::size_t>(x)];
                const double v00 = vol.voxels(z, a.i0, b.i0);
                const double v01 = vol.voxels(z, a.i0, b.i1);
                const double v10 = vol.voxels(z, a.i1, b.i0);
                const double v11 = vol.voxels(z, a.i1, b.i1);
                const double top = v00 + b.frac * (v01 - v00);
                const double bottom = v10 + b.frac * (v11 - v10);
                out.voxels(z, y, x) = static_cast<float>(top + a.frac * (bottom - top));
            }
        }
    }

    std::optional<MaskVolume> out_mask;
    if (mask) {
        out_mask = MaskVolume{nearest_resample(mask->voxels, out_h, out_w, step_y, step_x), out.spacing};
    }
    return {std::move(out), std::move(out_mask)};
}

MaskVolume resample_mask_to(const MaskVolume& mask, int64_t height, int64_t width, Spacing spacing) {
    if (height < 1 || width < 1) throw ShapeError("resample_mask_to: empty target grid");
    const double step_y = spacing.y / mask.spacing.y;
    const double step_x = spacing.x / mask.spacing.x;
    return MaskVolume{nearest_resample(mask.voxels, height, width, step_y, step_x), spacing};
}

float normalize_value(float hu, NormalizeMode mode) {
    float v = hu;
    if (mode == NormalizeMode::zero) {
        if (!(hu > -50.0f && hu < 200.0f)) v = 0.0f;
    } else {
        v = std::clamp(hu, -50.0f, 200.0f);
    }
    return (v + 50.0f) / 250.0f;
}

VolumeScan normalize(const VolumeScan& vol, NormalizeMode mode) {
    VolumeScan out = vol;
    for (auto& v : out.voxels.data) v = normalize_value(v, mode);
    return out;
}

std::pair<int64_t, int64_t> crop_center(const MaskSlice& support) {
    double sy = 0.0;
    double sx = 0.0;
    int64_t n = 0;
    for (int64_t y = 0; y < support.height; ++y) {
        for (int64_t x = 0; x < support.width; ++x) {
            if (support(y, x) != 0) {
                sy += static_cast<double>(y);
                sx += static_cast<double>(x);
                ++n;
            }
        }
    }
    if (n == 0) throw std::invalid_argument("no annotation on support slice");
    const double cy = sy / static_cast<double>(n);
    const double cx = sx / static_cast<double>(n);
    return {static_cast<int64_t>(std::ceil(cy - 0.5)), static_cast<int64_t>(std::ceil(cx - 0.5))};
}

CropRecord crop_window(const MaskSlice& support, int64_t size) {
    if (size < 1) throw ConfigError("crop: size must be positive");
    const auto [cy, cx] = crop_center(support);
    return CropRecord{cy - size / 2, cx - size / 2, size, support.height, support.width};
}

namespace {

template <class T>
Grid3<T> crop_grid(const Grid3<T>& in, const CropRecord& rec) {
    if (in.height() != rec.full_height || in.width() != rec.full_width) {
        throw ShapeError("crop: record does not match grid");
    }
    Grid3<T> out({in.depth(), rec.size, rec.size}, T{});
    for (int64_t z = 0; z < in.depth(); ++z) {
        for (int64_t y = 0; y < rec.size; ++y) {
            const int64_t sy = rec.y0 + y;
            if (sy < 0 || sy >= in.height()) continue;
            for (int64_t x = 0; x < rec.size; ++x) {
                const int64_t sx = rec.x0 + x;
                if (sx < 0 || sx >= in.width()) continue;
                out(z, y, x) = in(z, sy, sx);
            }
        }
    }
    return out;
}

}  // namespace

VolumeScan crop_volume(const VolumeScan& vol, const CropRecord& rec) {
    return VolumeScan{crop_grid(vol.voxels, rec), vol.spacing, vol.id};
}

MaskVolume crop_mask(const MaskVolume& mask, const CropRecord& rec) {
    return MaskVolume{crop_grid(mask.voxels, rec), mask.spacing};
}

MaskSlice crop_slice(const MaskSlice& slice, const CropRecord& rec) {
    Grid3<uint8_t> g({1, slice.height, slice.width});
    g.set_slice(0, slice);
    return crop_grid(g, rec).slice(0);
}

CroppedCase crop_around(const VolumeScan& vol, const MaskVolume& mask, int64_t support_index, int64_t size) {
    if (mask.voxels.shape != vol.voxels.shape) throw ShapeError("crop: mask/volume shape mismatch");
    if (support_index < 0 || support_index >= vol.voxels.depth()) {
        throw std::out_of_range("crop: support index out of range");
    }
    const CropRecord rec = crop_window(mask.voxels.slice(support_index), size);
    return CroppedCase{crop_volume(vol, rec), crop_mask(mask, rec), rec};
}

MaskVolume uncrop_mask(const MaskVolume& cropped, const CropRecord& rec) {
    if (cropped.voxels.height() != rec.size || cropped.voxels.width() != rec.size) {
        throw ShapeError("uncrop: cropped grid does not match crop record");
    }
    if (rec.full_height < 1 || rec.full_width < 1) throw ShapeError("uncrop: inconsistent crop record");
    MaskVolume out{Grid3<uint8_t>({cropped.voxels.depth(), rec.full_height, rec.full_width}), cropped.spacing};
    for (int64_t z = 0; z < cropped.voxels.depth(); ++z) {
        for (int64_t y = 0; y < rec.size; ++y) {
            const int64_t ty = rec.y0 + y;
            if (ty < 0 || ty >= rec.full_height) continue;
            for (int64_t x = 0; x < rec.size; ++x) {
                const int64_t tx = rec.x0 + x;
                if (tx < 0 || tx >= rec.full_width) continue;
                out.voxels(z, ty, tx) = cropped.voxels(z, y, x);
            }
        }
    }
    return out;
}

std::vector<SliceTask> sample_training_tasks(const VolumeScan& vol, const MaskVolume& mask, std::mt19937_64& rng,
                                             int64_t crop_size) {
    if (mask.voxels.shape != vol.voxels.shape) throw ShapeError("tasks: mask/volume shape mismatch");
    const int64_t depth = vol.voxels.depth();
    if (depth < 3) throw std::invalid_argument("tasks: need at least 3 slices");
    std::vector<int64_t> candidates;
    for (int64_t z = 0; z < depth; ++z) {
        if (mask.slice_area(z) > 0) candidates.push_back(z);
    }
    if (candidates.empty()) throw std::invalid_argument("tasks: volume mask is empty");
    const int64_t support =
        candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];

    std::optional<CropRecord> rec;
    if (crop_size > 0) rec = crop_window(mask.voxels.slice(support), crop_size);
    const auto image_at = [&](int64_t z) {
        if (!rec) return vol.voxels.slice(z);
        Grid3<float> g({1, vol.voxels.height(), vol.voxels.width()});
        g.set_slice(0, vol.voxels.slice(z));
        return crop_grid(g, *rec).slice(0);
    };
    const auto mask_at = [&](int64_t z) {
        auto m = mask.voxels.slice(z);
        return rec ? crop_slice(m, *rec) : m;
    };

    std::vector<SliceTask> tasks;
    const auto support_image = image_at(support);
    const auto support_mask = mask_at(support);
    for (const int64_t gap : {-2, -1, 1, 2}) {
        // Out-of-range neighbours are mirrored about the support slice.
        int64_t q = support + gap;
        if (q < 0 || q >= depth) q = support - gap;
        // very thin volumes: the mirror can overshoot too
        q = std::clamp<int64_t>(q, 0, depth - 1);
        SliceTask t;
        t.support_image = support_image;
        t.support_mask = support_mask;
        t.query_image = image_at(q);
        t.query_mask = mask_at(q);
        t.support_index = support;
        t.slice_gap = q - support;
        tasks.push_back(std::move(t));
    }
    return tasks;
}

int64_t largest_slice(const MaskVolume& mask) {
    int64_t best = -1;
    int64_t best_area = 0;
    for (int64_t z = 0; z < mask.voxels.depth(); ++z) {
        const int64_t a = mask.slice_area(z);
        if (a > best_area) {
            best_area = a;
            best = z;
        }
    }
    if (best < 0) throw std::invalid_argument("largest_slice: mask is empty");
    return best;
}

std::pair<VolumeScan, MaskVolume> preprocess(const VolumeScan& vol, const MaskVolume& mask,
                                             const PreprocessConfig& cfg) {
    auto [resampled, resampled_mask] = resample_xy(vol, mask, cfg.target_xy_spacing);
    return {normalize(resampled, cfg.normalize_mode), std::move(*resampled_mask)};
}

}  // namespace propnet::data
