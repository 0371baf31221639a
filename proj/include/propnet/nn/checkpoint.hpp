#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "propnet/nn/model.hpp"

namespace propnet::checkpoint {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainState {
    int64_t epoch = 0;  // completed epochs
    int64_t global_step = 0;
    double best_val_dsc = -1.0;
    int64_t best_epoch = -1;
};

struct Checkpoint {
    nlohmann::json config;  // full run configuration
    TrainState state;
    std::string rng_state;  // serialised std::mt19937_64
    std::string fingerprint;
};

/// Writes network parameters and buffers, Adam moments (when `optim` is given)
/// and the metadata. Output is byte-stable for identical inputs. The file is
/// written to a temporary name and renamed into place.
void save(const std::filesystem::path& path, const model::PropNet& net, const torch::optim::Adam* optim,
          const Checkpoint& meta);

/// Reads only the metadata block.
[[nodiscard]] Checkpoint read_meta(const std::filesystem::path& path);

/// Restores into `net` (and `optim`). The file is parsed and every tensor
/// shape checked before anything is modified.
Checkpoint load(const std::filesystem::path& path, model::PropNet& net, torch::optim::Adam* optim);

}  // namespace propnet::checkpoint
