#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "propnet/config.hpp"
#include "propnet/dataset.hpp"
#include "propnet/nn/checkpoint.hpp"
#include "propnet/nn/model.hpp"

namespace propnet::train {

/// Cosine annealing with warm restarts evaluated at a (possibly fractional) epoch.
[[nodiscard]] double lr_at(double epoch, const LrSchedule& s);

struct EpochRecord {
    int64_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;  // mean total loss over the epoch's steps
    double propose_c = 0.0;
    double refine_c = 0.0;
    double w = 0.0;
    double w_prime = 0.0;
    std::optional<double> val_dsc;
    double seconds = 0.0;

    [[nodiscard]] nlohmann::json to_json() const;
};

struct TrainOptions {
    std::optional<std::filesystem::path> resume;  // checkpoint to continue from
    std::optional<int64_t> stop_after;            // stop once this many epochs are complete
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    std::filesystem::path last_checkpoint;
    std::filesystem::path best_checkpoint;
    std::vector<EpochRecord> history;
    double best_val_dsc = -1.0;
    double wall_seconds = 0.0;
};

/// Network-space training data: resampled and normalised volumes.
struct PreparedCase {
    std::string id;
    VolumeScan volume;
    MaskVolume mask;
};

[[nodiscard]] std::vector<PreparedCase> prepare(const std::vector<data::Case>& cases,
                                                const data::PreprocessConfig& prep);

/// Mean DSC of full propagation from the largest annotated slice.
[[nodiscard]] double validation_dsc(model::PropNet& net, const std::vector<data::Case>& cases,
                                    const config::RunConfig& cfg);

/// Applies thread count and deterministic-algorithm settings.
void configure_runtime(const TrainConfig& cfg);

[[nodiscard]] model::PropNet build_network(const config::RunConfig& cfg);

/// Runs the training loop, writing last.ckpt, best.ckpt, epoch_<k>.ckpt and
/// history.jsonl into `out_dir`.
TrainResult train(const config::RunConfig& cfg, const std::filesystem::path& out_dir, const TrainOptions& opts = {});

/// Loads a network for inference; the architecture comes from the checkpoint.
[[nodiscard]] model::PropNet load_network(const std::filesystem::path& ckpt);

class NanLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace propnet::train
