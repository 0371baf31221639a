#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "propnet/data.hpp"
#include "propnet/model_config.hpp"
#include "propnet/propagator.hpp"
#include "propnet/train_config.hpp"

namespace propnet::config {

struct DataSection {
    data::PhantomConfig phantom;
    data::PreprocessConfig preprocess;
    int64_t train_count = 40;
    int64_t val_count = 10;
    std::string train_dir;  // empty: generate in memory from the run seed
    std::string val_dir;
};

struct EvaluateSection {
    std::vector<double> tolerances_mm{0.5, 1.0, 2.0};
};

struct AblationSection {
    std::vector<double> deviations_mm{-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0};
    std::vector<double> intervals_mm{5.0, 10.0, 15.0, 20.0};
    int64_t timing_repeats = 10;
};

struct RunConfig {
    DataSection data;
    model::NetworkConfig model;
    train::TrainConfig train;
    propagate::PropagationConfig propagate;
    EvaluateSection evaluate;
    AblationSection ablate;
    uint64_t seed = 20240607;
    std::string output_dir = "runs/default";

    void validate() const;
};

/// Full canonical JSON (every field present, keys sorted).
[[nodiscard]] nlohmann::json to_json(const RunConfig& cfg);

/// Strictly parses `j` over the defaults. Unknown keys and type mismatches
/// throw ConfigError naming the key and the expected type.
[[nodiscard]] RunConfig from_json(const nlohmann::json& j);

/// Stable 64-bit FNV-1a hash of the canonical JSON, as 16 hex digits.
[[nodiscard]] std::string fingerprint(const RunConfig& cfg);

/// Loads `path` (when given; an empty file means all defaults), applies
/// `section.key=value` overrides, then PROPNET_SEED when `use_env` is set.
[[nodiscard]] RunConfig parse_config(const std::optional<std::filesystem::path>& path,
                                     const std::vector<std::string>& overrides = {}, bool use_env = true);

/// Seeds of the generated training and validation phantoms.
[[nodiscard]] uint64_t phantom_seed(const RunConfig& cfg, bool validation, int64_t index);

}  // namespace propnet::config
