#pragma once

#include <span>
#include <vector>

#include "propnet/grid.hpp"

namespace propnet::objectives {

/// Stage weights of the total loss. Head weights are fixed constants.
struct LossWeights {
    double w = 1.0;        // proposing stage
    double w_prime = 0.0;  // refining stage
    static constexpr double w_c = 1.0;
    static constexpr double w_r = 0.5;
    static constexpr double w_b = 0.5;
};

/// w = max(0.5, 1 - n/T), w' = min(1, n/T) for epoch n.
[[nodiscard]] LossWeights stage_weights(double epoch, double adjusting_factor);

enum class ErosionKernel { square, cross };

/// Inner boundary band y - erode(y, E). Pixels outside the image count as background.
[[nodiscard]] MaskSlice boundary_gt(const MaskSlice& y, int kernel_size, ErosionKernel kernel = ErosionKernel::square);
[[nodiscard]] MaskSlice erode(const MaskSlice& y, int kernel_size, ErosionKernel kernel = ErosionKernel::square);

/// Marks the ceil(N/3) largest entries; ties go to the lower row-major index.
[[nodiscard]] std::vector<uint8_t> hard_pixel_mask(std::span<const double> loss_map);
[[nodiscard]] MaskSlice hard_pixel_mask(const Image<double>& loss_map);
[[nodiscard]] MaskSlice hard_pixel_mask(const Image<float>& loss_map);

/// Soft Dice loss 1 - 2|a.b| / (|a| + |b|); 0 when both sums vanish.
/// With `hard` supplied every term is restricted to the marked pixels.
[[nodiscard]] double soft_dice(std::span<const double> a, std::span<const double> b,
                               std::span<const uint8_t> hard = {});

/// Analytic d(soft_dice)/da, same conventions as soft_dice.
[[nodiscard]] std::vector<double> soft_dice_grad(std::span<const double> a, std::span<const double> b,
                                                 std::span<const uint8_t> hard = {});

}  // namespace propnet::objectives
