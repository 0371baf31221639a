#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "propnet/config.hpp"

namespace propnet::data {

struct Case {
    std::string id;
    VolumeScan volume;  // raw grid
    MaskVolume mask;
};

/// Training or validation phantoms: read from the configured directory when
/// one is set, generated from the run seed otherwise.
[[nodiscard]] std::vector<Case> load_split(const config::RunConfig& cfg, bool validation);

/// Every `<id>.vol` / `<id>.mask` pair in `dir`, sorted by id.
[[nodiscard]] std::vector<Case> read_cases(const std::filesystem::path& dir);

[[nodiscard]] std::vector<Case> generate_cases(const config::RunConfig& cfg, bool validation, int64_t count);

/// Writes cases as `<dir>/<id>.{vol,mask,seed}` plus manifest.json. The seed is
/// the largest annotated slice.
void write_cases(const std::filesystem::path& dir, const std::vector<Case>& cases);

}  // namespace propnet::data
