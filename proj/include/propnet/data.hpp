#pragma once

#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "propnet/grid.hpp"

namespace propnet::data {

/// Mean and standard deviation of a tissue class, Hounsfield-like units.
struct Tissue {
    double mean = 0.0;
    double stddev = 0.0;
};

/// Procedural phantom: a gastric-wall ring with a thickened tumorous sector
/// whose cross-section grows and then shrinks along z, plus distractor organs.
struct PhantomConfig {
    std::array<int64_t, 3> shape{32, 96, 96};
    Spacing spacing{5.0, 1.2, 1.2};
    std::array<double, 2> ring_radius{6.0, 8.0};        // inner wall radius, voxels
    double wall_thickness = 2.0;                         // healthy wall, voxels
    std::array<double, 2> tumor_thickness{3.0, 5.0};    // peak thickness, voxels
    std::array<double, 2> angular_extent_deg{100.0, 200.0};
    std::array<int64_t, 2> tumor_slices{7, 14};          // z-extent, slices
    double jitter = 0.6;                                 // per-slice boundary deformation, voxels
    double blur = 0.7;                                   // in-plane edge blur, voxels
    Tissue background{-120.0, 25.0};
    Tissue lumen{10.0, 10.0};
    Tissue wall{40.0, 12.0};
    Tissue tumor{75.0, 12.0};
    Tissue organ{60.0, 12.0};
    uint64_t seed = 7;

    void validate() const;
};

[[nodiscard]] std::pair<VolumeScan, MaskVolume> synth_volume(const PhantomConfig& cfg);

/// Rescales the in-plane grid to `target_xy_spacing`; bilinear for the image,
/// nearest-neighbour for the mask. z is untouched.
[[nodiscard]] std::pair<VolumeScan, std::optional<MaskVolume>> resample_xy(
    const VolumeScan& vol, const std::optional<MaskVolume>& mask, double target_xy_spacing);

/// Nearest-neighbour resampling of a mask onto an explicit in-plane grid.
[[nodiscard]] MaskVolume resample_mask_to(const MaskVolume& mask, int64_t height, int64_t width,
                                          Spacing spacing);

enum class NormalizeMode { zero, clip };

/// Window normalisation with level 75 and width 250.
/// `zero` zeroes voxels outside (-50, 200) before the shift; `clip` clamps them.
[[nodiscard]] float normalize_value(float hu, NormalizeMode mode = NormalizeMode::zero);
[[nodiscard]] VolumeScan normalize(const VolumeScan& vol, NormalizeMode mode = NormalizeMode::zero);

/// Offsets of a fixed square window into the in-plane grid.
struct CropRecord {
    int64_t y0 = 0;
    int64_t x0 = 0;
    int64_t size = 0;
    int64_t full_height = 0;
    int64_t full_width = 0;

    bool operator==(const CropRecord&) const = default;
};

/// Window centre for a mask slice: centroid rounded to nearest, halves toward -inf.
[[nodiscard]] std::pair<int64_t, int64_t> crop_center(const MaskSlice& support);
[[nodiscard]] CropRecord crop_window(const MaskSlice& support, int64_t size);

struct CroppedCase {
    VolumeScan volume;
    MaskVolume mask;
    CropRecord record;
};

[[nodiscard]] CroppedCase crop_around(const VolumeScan& vol, const MaskVolume& mask,
                                      int64_t support_index, int64_t size);
[[nodiscard]] VolumeScan crop_volume(const VolumeScan& vol, const CropRecord& rec);
[[nodiscard]] MaskVolume crop_mask(const MaskVolume& mask, const CropRecord& rec);
[[nodiscard]] MaskSlice crop_slice(const MaskSlice& slice, const CropRecord& rec);

/// Inverse of crop_mask: places the window back into a zeroed full-size grid.
[[nodiscard]] MaskVolume uncrop_mask(const MaskVolume& cropped, const CropRecord& rec);

struct SliceTask {
    Image<float> support_image;
    MaskSlice support_mask;
    Image<float> query_image;
    MaskSlice query_mask;
    int64_t support_index = 0;
    int64_t slice_gap = 0;
};

/// One support slice drawn uniformly among tumour slices and its four
/// neighbours at offsets -2, -1, +1, +2; an out-of-range neighbour is mirrored
/// about the support. With `crop_size > 0` every slice is cropped around the
/// support centroid.
[[nodiscard]] std::vector<SliceTask> sample_training_tasks(const VolumeScan& vol,
                                                           const MaskVolume& mask,
                                                           std::mt19937_64& rng,
                                                           int64_t crop_size = 0);

/// Slice index with the largest annotated cross-section (lowest index on ties).
[[nodiscard]] int64_t largest_slice(const MaskVolume& mask);

struct PreprocessConfig {
    double target_xy_spacing = 0.6;
    NormalizeMode normalize_mode = NormalizeMode::zero;
    int64_t crop_size = 64;
};

/// Resample and normalise a raw scan (and its mask) into network space.
[[nodiscard]] std::pair<VolumeScan, MaskVolume> preprocess(const VolumeScan& vol,
                                                           const MaskVolume& mask,
                                                           const PreprocessConfig& cfg);

}  // namespace propnet::data
