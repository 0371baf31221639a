#pragma once
// Straightforward reference implementations used to check the optimised code.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "propnet/grid.hpp"

namespace oracle {

using propnet::Grid3;
using propnet::MaskSlice;
using propnet::MaskVolume;
using propnet::Spacing;

/// Pixel stays foreground iff every kernel offset lands inside the image on foreground.
inline MaskSlice erode(const MaskSlice& y, int size, bool cross) {
    const int r = size / 2;
    MaskSlice out(y.height, y.width);
    for (int64_t i = 0; i < y.height; ++i) {
        for (int64_t j = 0; j < y.width; ++j) {
            bool keep = y(i, j) != 0;
            for (int dy = -r; dy <= r && keep; ++dy) {
                for (int dx = -r; dx <= r && keep; ++dx) {
                    if (cross && dy != 0 && dx != 0) continue;
                    const int64_t yy = i + dy, xx = j + dx;
                    if (yy < 0 || xx < 0 || yy >= y.height || xx >= y.width || y(yy, xx) == 0) keep = false;
                }
            }
            out(i, j) = keep ? 1 : 0;
        }
    }
    return out;
}

inline bool is_surface(const Grid3<uint8_t>& m, int64_t z, int64_t y, int64_t x) {
    if (m(z, y, x) == 0) return false;
    const int64_t d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (const auto& o : d) {
        const int64_t zz = z + o[0], yy = y + o[1], xx = x + o[2];
        if (zz < 0 || yy < 0 || xx < 0 || zz >= m.depth() || yy >= m.height() || xx >= m.width()) return true;
        if (m(zz, yy, xx) == 0) return true;
    }
    return false;
}

/// All-pairs surface Dice.
inline double surface_dice(const MaskVolume& a, const MaskVolume& b, double tol, const Spacing& s) {
    struct P {
        double z, y, x;
    };
    auto pts = [&](const MaskVolume& m) {
        std::vector<P> out;
        for (int64_t z = 0; z < m.voxels.depth(); ++z)
            for (int64_t y = 0; y < m.voxels.height(); ++y)
                for (int64_t x = 0; x < m.voxels.width(); ++x)
                    if (is_surface(m.voxels, z, y, x)) out.push_back({z * s.z, y * s.y, x * s.x});
        return out;
    };
    const auto pa = pts(a), pb = pts(b);
    if (pa.empty() && pb.empty()) return 1.0;
    auto within = [&](const std::vector<P>& from, const std::vector<P>& to) {
        int64_t n = 0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const double d = (p.z - q.z) * (p.z - q.z) + (p.y - q.y) * (p.y - q.y) + (p.x - q.x) * (p.x - q.x);
                best = std::min(best, d);
            }
            if (std::sqrt(best) <= tol + 1e-9) ++n;
        }
        return n;
    };
    return static_cast<double>(within(pa, pb) + within(pb, pa)) / static_cast<double>(pa.size() + pb.size());
}

/// Largest component by repeated flood fill; ties go to the earliest seed voxel.
inline MaskVolume largest_component(const MaskVolume& m, bool c26) {
    const auto& v = m.voxels;
    Grid3<int32_t> label(v.shape);
    int32_t next = 0, best = -1;
    int64_t best_size = 0;
    for (int64_t z = 0; z < v.depth(); ++z)
        for (int64_t y = 0; y < v.height(); ++y)
            for (int64_t x = 0; x < v.width(); ++x) {
                if (v(z, y, x) == 0 || label(z, y, x) != 0) continue;
                ++next;
                int64_t size = 0;
                std::vector<std::array<int64_t, 3>> stack{{z, y, x}};
                label(z, y, x) = next;
                while (!stack.empty()) {
                    auto [cz, cy, cx] = stack.back();
                    stack.pop_back();
                    ++size;
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                const int nz = std::abs(dz) + std::abs(dy) + std::abs(dx);
                                if (nz == 0 || (!c26 && nz != 1)) continue;
                                const int64_t zz = cz + dz, yy = cy + dy, xx = cx + dx;
                                if (zz < 0 || yy < 0 || xx < 0 || zz >= v.depth() || yy >= v.height() ||
                                    xx >= v.width())
                                    continue;
                                if (v(zz, yy, xx) == 0 || label(zz, yy, xx) != 0) continue;
                                label(zz, yy, xx) = next;
                                stack.push_back({zz, yy, xx});
                            }
                }
                if (size > best_size) {
                    best_size = size;
                    best = next;
                }
            }
    MaskVolume out{Grid3<uint8_t>(v.shape), m.spacing};
    for (std::size_t i = 0; i < v.data.size(); ++i) out.voxels.data[i] = (best > 0 && label.data[i] == best) ? 1 : 0;
    return out;
}

/// Student-t two-sided p-value by Simpson integration of the density.
inline double t_two_sided_p(double t, double df) {
    const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi);
    auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
    const double a = std::abs(t);
    const int n = 200000;
    const double h = a / n;
    double s = pdf(0) + pdf(a);
    for (int i = 1; i < n; ++i) s += pdf(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    const double half_mass = s * h / 3.0;  // integral over [0, |t|]
    return std::clamp(1.0 - 2.0 * half_mass, 0.0, 1.0);
}

/// Textbook paired t statistic.
inline double paired_t(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double mean = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mean += x[i] - y[i];
    mean /= n;
    double ss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) ss += (x[i] - y[i] - mean) * (x[i] - y[i] - mean);
    const double sd = std::sqrt(ss / (n - 1));
    return mean / (sd / std::sqrt(n));
}

/// Top ceil(N/3) by full sort; ties broken toward the lower index.
inline std::vector<uint8_t> hard_mask(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    std::vector<uint8_t> out(v.size(), 0);
    for (std::size_t k = 0; k < (v.size() + 2) / 3; ++k) out[idx[k]] = 1;
    return out;
}

inline MaskSlice random_mask(std::mt19937_64& rng, int64_t h, int64_t w, double density) {
    std::bernoulli_distribution fg(density);
    MaskSlice m(h, w);
    for (auto& v : m.data) v = fg(rng) ? 1 : 0;
    return m;
}

/// Blobby masks: a few random rectangles so erosion has something to do.
inline MaskSlice random_blob_mask(std::mt19937_64& rng, int64_t h, int64_t w) {
    MaskSlice m(h, w);
    std::uniform_int_distribution<int64_t> n_rect(1, 5), py(0, h - 1), px(0, w - 1), sz(2, 16);
    const auto k = n_rect(rng);
    for (int64_t r = 0; r < k; ++r) {
        const auto y0 = py(rng), x0 = px(rng), hh = sz(rng), ww = sz(rng);
        for (int64_t y = y0; y < std::min(h, y0 + hh); ++y)
            for (int64_t x = x0; x < std::min(w, x0 + ww); ++x) m(y, x) = 1;
    }
    std::bernoulli_distribution flip(0.05);
    for (auto& v : m.data)
        if (flip(rng)) v = 1 - v;
    return m;
}

inline MaskVolume random_volume(std::mt19937_64& rng, std::array<int64_t, 3> shape, double density,
                                Spacing spacing = {1.0, 1.0, 1.0}) {
    std::bernoulli_distribution fg(density);
    MaskVolume m{Grid3<uint8_t>(shape), spacing};
    for (auto& v : m.voxels.data) v = fg(rng) ? 1 : 0;
    return m;
}

}  // namespace oracle
