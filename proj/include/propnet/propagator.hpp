#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "propnet/data.hpp"
#include "propnet/grid.hpp"

namespace propnet::propagate {

enum class Connectivity { c26, c6 };

struct PropagationConfig {
    double interval_mm = 20.0;
    double tau_fraction = 1.0 / 20.0;
    bool parallel = true;
    int max_iterations = 64;
    double threshold = 0.5;  // binarisation of predicted probabilities
    bool mcc = true;
    Connectivity connectivity = Connectivity::c26;

    void validate() const;
};

/// I = max(1, floor(interval_mm / spacing_z)).
[[nodiscard]] int64_t compute_interval(double spacing_z, double interval_mm = 20.0);

/// tau = |support| * fraction; throws on an empty support.
[[nodiscard]] double compute_tau(const MaskSlice& support, double fraction = 1.0 / 20.0);

/// Maps one annotated support slice to per-query foreground probabilities.
/// Implementations must be safe to call concurrently from two threads.
class SlicePredictor {
public:
    virtual ~SlicePredictor() = default;
    [[nodiscard]] virtual std::vector<Image<float>> predict(const Image<float>& support_image,
                                                            const MaskSlice& support_mask,
                                                            std::span<const Image<float>> queries) const = 0;
};

enum class Termination { area_below_tau, volume_edge, max_iterations };

[[nodiscard]] const char* to_string(Termination t);

struct FrontStep {
    int64_t support_index = 0;
    std::vector<int64_t> query_indices;
    int64_t new_support_area = 0;
};

struct FrontTrace {
    int direction = 0;  // -1 toward slice 0, +1 toward the last slice
    std::vector<FrontStep> steps;
    Termination termination = Termination::volume_edge;
};

struct PropagationResult {
    MaskVolume mask3d;
    std::vector<int64_t> per_slice_area;
    std::vector<int64_t> source_support;  // support slice that produced each slice, -1 if unvisited
    std::vector<FrontTrace> fronts;       // [toward 0, toward end]
    int64_t seed_index = 0;
    int64_t interval = 1;
    double tau = 0.0;
    double wall_seconds = 0.0;

    [[nodiscard]] nlohmann::json trace_json() const;
};

/// Up-down iterative propagation from one annotated slice. Both fronts share no
/// mutable state, so parallel and sequential execution give identical masks.
[[nodiscard]] PropagationResult propagate(const SlicePredictor& model, const VolumeScan& vol, int64_t seed_index,
                                          const MaskSlice& seed_mask, const PropagationConfig& cfg);

/// Keeps the largest connected foreground component; ties go to the component
/// whose first voxel in (z, y, x) order comes first.
[[nodiscard]] MaskVolume mcc_filter(const MaskVolume& mask, Connectivity connectivity = Connectivity::c26);

/// Maps a cropped-frame prediction back onto the full in-plane grid.
[[nodiscard]] MaskVolume assemble_full(const PropagationResult& result, const data::CropRecord& record);

struct SegmentationOutput {
    MaskVolume mask;  // on the raw input grid
    PropagationResult propagation;
    data::CropRecord crop;
};

/// Full inference path on a raw scan: resample, normalise, crop around the
/// seed, propagate, optional MCC, uncrop and resample back.
[[nodiscard]] SegmentationOutput segment_volume(const SlicePredictor& model, const VolumeScan& raw,
                                                int64_t seed_index, const MaskSlice& seed_mask_raw,
                                                const data::PreprocessConfig& prep, const PropagationConfig& cfg);

}  // namespace propnet::propagate
