#include "propnet/objectives.hpp"

#include <algorithm>
#include <numeric>

namespace propnet::objectives {

LossWeights stage_weights(double epoch, double adjusting_factor) {
    if (epoch < 0.0) throw std::invalid_argument("stage_weights: epoch must be nonnegative");
    if (!(adjusting_factor > 0.0)) throw std::invalid_argument("stage_weights: T must be positive");
    const double ratio = epoch / adjusting_factor;
    return LossWeights{std::max(0.5, 1.0 - ratio), std::min(1.0, ratio)};
}

MaskSlice erode(const MaskSlice& y, int kernel_size, ErosionKernel kernel) {
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw ConfigError("boundary: erosion kernel size must be odd and >= 1, got " + std::to_string(kernel_size));
    }
    const int64_t r = kernel_size / 2;
    const auto at = [&](int64_t yy, int64_t xx) -> bool {
        return yy >= 0 && yy < y.height && xx >= 0 && xx < y.width && y(yy, xx) != 0;
    };
    // Horizontal pass: h(p) = all of row-window foreground.
    MaskSlice horizontal(y.height, y.width);
    MaskSlice vertical(y.height, y.width);
    for (int64_t yy = 0; yy < y.height; ++yy) {
        for (int64_t xx = 0; xx < y.width; ++xx) {
            bool row_ok = true;
            for (int64_t d = -r; d <= r && row_ok; ++d) row_ok = at(yy, xx + d);
            bool col_ok = true;
            for (int64_t d = -r; d <= r && col_ok; ++d) col_ok = at(yy + d, xx);
            horizontal(yy, xx) = row_ok ? 1 : 0;
            vertical(yy, xx) = col_ok ? 1 : 0;
        }
    }
    MaskSlice out(y.height, y.width);
    if (kernel == ErosionKernel::cross) {
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = horizontal.data[i] & vertical.data[i];
        return out;
    }
    // Square = vertical erosion of the horizontal erosion.
    for (int64_t yy = 0; yy < y.height; ++yy) {
        for (int64_t xx = 0; xx < y.width; ++xx) {
            bool ok = true;
            for (int64_t d = -r; d <= r && ok; ++d) {
                const int64_t sy = yy + d;
                ok = sy >= 0 && sy < y.height && horizontal(sy, xx) != 0;
            }
            out(yy, xx) = ok ? 1 : 0;
        }
    }
    return out;
}

MaskSlice boundary_gt(const MaskSlice& y, int kernel_size, ErosionKernel kernel) {
    const MaskSlice inner = erode(y, kernel_size, kernel);
    MaskSlice band(y.height, y.width);
    for (std::size_t i = 0; i < band.size(); ++i) band.data[i] = (y.data[i] != 0 && inner.data[i] == 0) ? 1 : 0;
    return band;
}

std::vector<uint8_t> hard_pixel_mask(std::span<const double> loss_map) {
    const std::size_t n = loss_map.size();
    std::vector<uint8_t> h(n, 0);
    if (n == 0) return h;
    const std::size_t k = (n + 2) / 3;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return loss_map[a] > loss_map[b] || (loss_map[a] == loss_map[b] && a < b);
                      });
    for (std::size_t i = 0; i < k; ++i) h[order[i]] = 1;
    return h;
}

MaskSlice hard_pixel_mask(const Image<double>& loss_map) {
    MaskSlice out(loss_map.height, loss_map.width);
    out.data = hard_pixel_mask(std::span<const double>(loss_map.data));
    return out;
}

MaskSlice hard_pixel_mask(const Image<float>& loss_map) {
    Image<double> widened(loss_map.height, loss_map.width);
    std::copy(loss_map.data.begin(), loss_map.data.end(), widened.data.begin());
    return hard_pixel_mask(widened);
}

namespace {

struct DiceSums {
    double overlap = 0.0;
    double total = 0.0;
};

DiceSums dice_sums(std::span<const double> a, std::span<const double> b, std::span<const uint8_t> hard) {
    if (a.size() != b.size() || (!hard.empty() && hard.size() != a.size())) {
        throw ShapeError("soft_dice: shape mismatch");
    }
    DiceSums s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!hard.empty() && hard[i] == 0) continue;
        s.overlap += a[i] * b[i];
        s.total += a[i] + b[i];
    }
    return s;
}

}  // namespace

double soft_dice(std::span<const double> a, std::span<const double> b, std::span<const uint8_t> hard) {
    const DiceSums s = dice_sums(a, b, hard);
    if (s.total == 0.0) return 0.0;
    return 1.0 - 2.0 * s.overlap / s.total;
}

std::vector<double> soft_dice_grad(std::span<const double> a, std::span<const double> b,
                                   std::span<const uint8_t> hard) {
    const DiceSums s = dice_sums(a, b, hard);
    std::vector<double> g(a.size(), 0.0);
    if (s.total == 0.0) return g;
    // d/da_i [1 - 2 I / S] = -2 (b_i S - I) / S^2 on selected pixels.
    const double inv2 = 1.0 / (s.total * s.total);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!hard.empty() && hard[i] == 0) continue;
        g[i] = -2.0 * (b[i] * s.total - s.overlap) * inv2;
    }
    return g;
}

}  // namespace propnet::objectives
