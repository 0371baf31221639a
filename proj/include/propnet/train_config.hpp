#pragma once

#include <cstdint>

#include "propnet/grid.hpp"
#include "propnet/objectives.hpp"

namespace propnet::train {

/// Cosine annealing with warm restarts; periods T0, T0*Tmult, T0*Tmult^2, ...
struct LrSchedule {
    double initial_lr = 1e-3;
    double t0 = 40.0;
    double t_mult = 2.0;
    double eta_min = 5e-6;
};

struct TrainConfig {
    int64_t epochs = 60;
    LrSchedule schedule{1e-3, 20.0, 2.0, 5e-6};
    double loss_adjusting_factor = 12.0;  // T of the stage-weight schedule
    int64_t batch_size = 8;               // task instances per step
    int64_t supports_per_volume = 1;      // support draws per training volume per epoch
    int64_t validate_every = 5;
    int64_t checkpoint_every = 5;
    double grad_clip = 5.0;
    int erosion_kernel_size = 9;
    objectives::ErosionKernel erosion_kernel = objectives::ErosionKernel::square;
    bool deterministic = true;
    int64_t threads = 1;

    void validate() const {
        if (epochs < 1) throw ConfigError("train.epochs: must be >= 1");
        if (!(schedule.eta_min > 0.0 && schedule.initial_lr > schedule.eta_min)) {
            throw ConfigError("train.initial_lr/eta_min: require initial_lr > eta_min > 0");
        }
        if (!(schedule.t0 > 0.0) || schedule.t_mult < 1.0) {
            throw ConfigError("train.t0/t_mult: require t0 > 0 and t_mult >= 1");
        }
        if (!(loss_adjusting_factor > 0.0)) throw ConfigError("train.loss_adjusting_factor: must be positive");
        if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
        if (supports_per_volume < 1) throw ConfigError("train.supports_per_volume: must be >= 1");
        if (validate_every < 0 || checkpoint_every < 0) throw ConfigError("train: cadences must be nonnegative");
        if (erosion_kernel_size < 1 || erosion_kernel_size % 2 == 0) {
            throw ConfigError("train.erosion_kernel_size: must be odd and >= 1");
        }
        if (threads < 1) throw ConfigError("train.threads: must be >= 1");
    }
};

}  // namespace propnet::train
