#include "propnet/grid.hpp"

#include <algorithm>
#include <cmath>

namespace propnet {

void VolumeScan::validate() const {
    if (!(spacing.z > 0.0 && spacing.y > 0.0 && spacing.x > 0.0)) {
        throw ConfigError("volume '" + id + "': spacing components must be positive");
    }
    if (voxels.size() != static_cast<std::size_t>(voxels.shape[0] * voxels.shape[1] * voxels.shape[2])) {
        throw ShapeError("volume '" + id + "': voxel buffer does not match shape");
    }
    if (!std::all_of(voxels.data.begin(), voxels.data.end(), [](float v) { return std::isfinite(v); })) {
        throw ConfigError("volume '" + id + "': non-finite voxel value");
    }
}

int64_t MaskVolume::count() const {
    return std::count_if(voxels.data.begin(), voxels.data.end(), [](uint8_t v) { return v != 0; });
}

int64_t MaskVolume::slice_area(int64_t z) const {
    const auto begin = voxels.data.begin() + static_cast<std::ptrdiff_t>(z * voxels.slice_size());
    return std::count_if(begin, begin + voxels.slice_size(), [](uint8_t v) { return v != 0; });
}

int64_t count_foreground(const MaskSlice& m) {
    return std::count_if(m.data.begin(), m.data.end(), [](uint8_t v) { return v != 0; });
}

}  // namespace propnet
