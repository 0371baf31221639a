#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "propnet/grid.hpp"

namespace propnet::model {

enum class Head { proposing_region, proposing_composite, refining_composite };

struct NetworkConfig {
    int64_t input_size = 64;                     // H = W
    int64_t base_channels = 16;                  // width of the first residual stage
    std::array<int64_t, 4> stage_blocks{3, 4, 6, 3};
    std::vector<int64_t> dilation_rates{1, 2, 4, 8};
    std::vector<int64_t> psp_scales{1, 2, 3, 6};
    int64_t context_paths = 4;                   // active dilated paths (ablation hook)
    double leak_slope = 0.01;
    bool boundary_branch_enabled = true;
    bool refining_stage_enabled = true;
    bool stop_gradient = false;                  // detach proposing features before refining

    void validate() const {
        if (input_size < 32 || input_size % 32 != 0) {
            throw ConfigError("model.input_size: must be a positive multiple of 32");
        }
        if (base_channels < 4) throw ConfigError("model.base_channels: must be >= 4");
        if (dilation_rates.empty()) throw ConfigError("model.dilation_rates: must not be empty");
        for (std::size_t i = 0; i < dilation_rates.size(); ++i) {
            if (dilation_rates[i] < 1 || (i > 0 && dilation_rates[i] <= dilation_rates[i - 1])) {
                throw ConfigError("model.dilation_rates: must be positive and strictly ascending");
            }
        }
        if (psp_scales.empty()) throw ConfigError("model.psp_scales: must not be empty");
        for (auto s : psp_scales) {
            if (s < 1) throw ConfigError("model.psp_scales: must be positive");
        }
        if (context_paths < 1 || context_paths > static_cast<int64_t>(dilation_rates.size())) {
            throw ConfigError("model.context_paths: must lie in [1, len(dilation_rates)]");
        }
        for (auto b : stage_blocks) {
            if (b < 1) throw ConfigError("model.stage_blocks: every stage needs at least one block");
        }
        if (leak_slope < 0.0) throw ConfigError("model.leak_slope: must be nonnegative");
    }
};

}  // namespace propnet::model
