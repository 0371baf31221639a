#pragma once

#include <torch/torch.h>

#include "propnet/nn/model.hpp"
#include "propnet/objectives.hpp"

namespace propnet::losses {

/// Soft Dice loss summed over every element of the batch. `pred` carries the
/// gradient; `target` and `hard` are treated as constants. When `hard` is
/// defined only its nonzero pixels enter the sums.
[[nodiscard]] torch::Tensor soft_dice(const torch::Tensor& pred, const torch::Tensor& target,
                                      const torch::Tensor& hard = {});

/// Per-image mask of the ceil(N/3) pixels with the largest |a - b|.
[[nodiscard]] torch::Tensor hard_pixel_mask(const torch::Tensor& a, const torch::Tensor& b);

struct LossBreakdown {
    torch::Tensor total;
    double propose_c = 0.0;
    double propose_r = 0.0;
    double propose_b = 0.0;
    double refine_c = 0.0;
    double refine_r = 0.0;
    double refine_b = 0.0;
};

/// Weighted sum over both stages. The refining terms use the hard-pixel mask
/// derived from the proposing composite.
[[nodiscard]] LossBreakdown total_loss(const model::NetworkOutputs& out, const torch::Tensor& query_mask,
                                       const torch::Tensor& boundary_mask, const objectives::LossWeights& w);

}  // namespace propnet::losses
