#pragma once

#include <filesystem>
#include <string>

#include "propnet/grid.hpp"

namespace propnet::io {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Container layout, all little-endian C-order:
//   <stem>.vol.raw  f32 (z,y,x)   + <stem>.vol.json  {"shape","spacing_mm","dtype":"f32","id"}
//   <stem>.mask.raw u8 {0,1}      + <stem>.mask.json {"shape","spacing_mm","dtype":"u8"}
//   <stem>.seed.raw u8 (y,x)      + <stem>.seed.json {"shape","spacing_mm","dtype":"u8","slice_index"}

void write_volume(const std::filesystem::path& stem, const VolumeScan& vol);
[[nodiscard]] VolumeScan read_volume(const std::filesystem::path& stem);

void write_mask(const std::filesystem::path& stem, const MaskVolume& mask);
[[nodiscard]] MaskVolume read_mask(const std::filesystem::path& stem);

struct SeedAnnotation {
    MaskSlice mask;
    int64_t slice_index = 0;
    Spacing spacing;
};

void write_seed(const std::filesystem::path& stem, const SeedAnnotation& seed);
[[nodiscard]] SeedAnnotation read_seed(const std::filesystem::path& stem);

/// Accepts either a bare stem or a path ending in one of the known suffixes
/// (".vol.raw", ".vol.json", ".mask.raw", ...) and returns the bare stem.
[[nodiscard]] std::filesystem::path strip_suffix(const std::filesystem::path& p);

}  // namespace propnet::io
