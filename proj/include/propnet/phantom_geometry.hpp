#pragma once

#include <vector>

#include "propnet/data.hpp"

namespace propnet::data {

/// Per-slice analytic description of a generated phantom.
struct SliceGeometry {
    double center_y = 0.0;
    double center_x = 0.0;
    double inner_radius = 0.0;
    double tumor_thickness = 0.0;  // 0 on tumour-free slices
    double extent_rad = 0.0;       // angular width of the tumour sector
    double direction_rad = 0.0;    // sector bisector
    std::array<double, 4> jitter{}; // harmonic amplitudes/phases of the outer-edge deformation
};

struct OrganBlob {
    double center_y = 0.0;
    double center_x = 0.0;
    double semi_y = 0.0;
    double semi_x = 0.0;
    double taper = 0.0;  // fractional semi-axis change per slice away from the middle
};

struct PhantomGeometry {
    std::vector<SliceGeometry> slices;
    std::vector<OrganBlob> organs;
    int64_t tumor_first = 0;
    int64_t tumor_last = 0;  // inclusive
};

/// Draws the geometry for `cfg` from its seed. synth_volume rasterises exactly this.
[[nodiscard]] PhantomGeometry phantom_geometry(const PhantomConfig& cfg);

}  // namespace propnet::data
