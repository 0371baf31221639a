#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "propnet/data.hpp"
#include "propnet/phantom_geometry.hpp"

namespace propnet::data {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr float kMinHu = -199.5f;
constexpr float kMaxHu = 299.5f;

enum Label : uint8_t { kBackground = 0, kOrgan, kLumen, kWall, kTumor };

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    return a - kPi;
}

void check_range(const std::array<double, 2>& r, const char* name, double min_value) {
    if (!(r[0] >= min_value && r[1] >= r[0])) {
        throw ConfigError(std::string("phantom.") + name + ": expected " + std::to_string(min_value) +
                          " <= lo <= hi");
    }
}

std::vector<double> gaussian_kernel(double sigma) {
    if (sigma <= 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + radius)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable blur with edge replication.
Image<double> blur(const Image<double>& img, const std::vector<double>& k) {
    if (k.size() == 1) return img;
    const int64_t r = static_cast<int64_t>(k.size() / 2);
    Image<double> tmp(img.height, img.width);
    Image<double> out(img.height, img.width);
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int64_t i = -r; i <= r; ++i) {
                acc += k[static_cast<std::size_t>(i + r)] * img(y, std::clamp<int64_t>(x + i, 0, img.width - 1));
            }
            tmp(y, x) = acc;
        }
    }
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int64_t i = -r; i <= r; ++i) {
                acc += k[static_cast<std::size_t>(i + r)] * tmp(std::clamp<int64_t>(y + i, 0, img.height - 1), x);
            }
            out(y, x) = acc;
        }
    }
    return out;
}

bool in_tumor(const SliceGeometry& g, double y, double x) {
    if (g.tumor_thickness <= 0.0) return false;
    const double dy = y - g.center_y;
    const double dx = x - g.center_x;
    const double r = std::hypot(dy, dx);
    if (r < g.inner_radius) return false;
    const double theta = std::atan2(dy, dx);
    if (g.extent_rad < 2.0 * kPi && std::abs(wrap_angle(theta - g.direction_rad)) > 0.5 * g.extent_rad) {
        return false;
    }
    const double outer = g.inner_radius + g.tumor_thickness + g.jitter[0] * std::cos(2.0 * theta + g.jitter[1]) +
                         g.jitter[2] * std::cos(3.0 * theta + g.jitter[3]);
    return r < outer;
}

}  // namespace

void PhantomConfig::validate() const {
    if (shape[0] < 1 || shape[1] < 8 || shape[2] < 8) {
        throw ConfigError("phantom.shape: dimensions must be positive (in-plane >= 8)");
    }
    if (!(spacing.z > 0.0 && spacing.y > 0.0 && spacing.x > 0.0)) {
        throw ConfigError("phantom.spacing: components must be positive");
    }
    check_range(ring_radius, "ring_radius", 1.0);
    check_range(tumor_thickness, "tumor_thickness", 1.0);
    check_range(angular_extent_deg, "angular_extent_deg", 1.0);
    if (angular_extent_deg[1] > 360.0) throw ConfigError("phantom.angular_extent_deg: upper bound exceeds 360");
    if (tumor_slices[0] < 3 || tumor_slices[1] < tumor_slices[0]) {
        throw ConfigError("phantom.tumor_slices: expected 3 <= lo <= hi");
    }
    if (tumor_slices[1] > shape[0]) throw ConfigError("phantom.tumor_slices: exceeds volume depth");
    if (wall_thickness <= 0.0) throw ConfigError("phantom.wall_thickness: must be positive");
    if (jitter < 0.0 || blur < 0.0) throw ConfigError("phantom.jitter/blur: must be nonnegative");
    const double reach = ring_radius[1] + tumor_thickness[1] + jitter * 2.0;
    if (2.0 * reach + 4.0 > static_cast<double>(std::min(shape[1], shape[2]))) {
        throw ConfigError("phantom: ring does not fit the in-plane grid");
    }
}

PhantomGeometry phantom_geometry(const PhantomConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const int64_t depth = cfg.shape[0];
    const double h = static_cast<double>(cfg.shape[1]);
    const double w = static_cast<double>(cfg.shape[2]);

    const double radius = uniform(rng, cfg.ring_radius[0], cfg.ring_radius[1]);
    const double peak_thickness = uniform(rng, cfg.tumor_thickness[0], cfg.tumor_thickness[1]);
    const double peak_extent = uniform(rng, cfg.angular_extent_deg[0], cfg.angular_extent_deg[1]) * kPi / 180.0;
    const double direction = uniform(rng, -kPi, kPi);
    const int64_t length =
        std::uniform_int_distribution<int64_t>(cfg.tumor_slices[0], cfg.tumor_slices[1])(rng);
    const int64_t margin = std::min<int64_t>(2, (depth - length) / 2);
    const int64_t first =
        std::uniform_int_distribution<int64_t>(margin, std::max(margin, depth - length - margin))(rng);

    const double reach = radius + peak_thickness + 2.0 * cfg.jitter + 2.0;
    const double free_y = std::max(0.0, 0.5 * h - reach - 2.0);
    const double free_x = std::max(0.0, 0.5 * w - reach - 2.0);
    const double cy0 = 0.5 * h + uniform(rng, -0.5, 0.5) * std::min(free_y, 12.0);
    const double cx0 = 0.5 * w + uniform(rng, -0.5, 0.5) * std::min(free_x, 12.0);
    const double drift_y = uniform(rng, -0.15, 0.15);
    const double drift_x = uniform(rng, -0.15, 0.15);
    const double mid = 0.5 * static_cast<double>(depth - 1);

    PhantomGeometry geo;
    geo.tumor_first = first;
    geo.tumor_last = first + length - 1;
    geo.slices.resize(static_cast<std::size_t>(depth));
    for (int64_t z = 0; z < depth; ++z) {
        auto& s = geo.slices[static_cast<std::size_t>(z)];
        const double dz = static_cast<double>(z) - mid;
        s.center_y = std::clamp(cy0 + drift_y * dz, reach, h - 1.0 - reach);
        s.center_x = std::clamp(cx0 + drift_x * dz, reach, w - 1.0 - reach);
        s.inner_radius = radius;
        s.direction_rad = direction;
        for (std::size_t i = 0; i < 4; i += 2) {
            s.jitter[i] = uniform(rng, -cfg.jitter, cfg.jitter);
            s.jitter[i + 1] = uniform(rng, -kPi, kPi);
        }
        if (z >= geo.tumor_first && z <= geo.tumor_last) {
            const double p = std::sin(kPi * (static_cast<double>(z - first) + 0.5) / static_cast<double>(length));
            s.tumor_thickness = peak_thickness * (0.35 + 0.65 * p);
            s.extent_rad = std::min(2.0 * kPi, peak_extent * (0.4 + 0.6 * p));
            if (peak_extent >= 2.0 * kPi) s.extent_rad = 2.0 * kPi;
        }
    }

    const int organ_count = 2;
    for (int i = 0; i < organ_count; ++i) {
        OrganBlob o;
        const double angle = direction + kPi * (0.6 + 0.8 * i) + uniform(rng, -0.3, 0.3);
        const double dist = reach + uniform(rng, 8.0, 14.0);
        o.center_y = cy0 + dist * std::sin(angle);
        o.center_x = cx0 + dist * std::cos(angle);
        o.semi_y = uniform(rng, 5.0, 10.0);
        o.semi_x = uniform(rng, 5.0, 10.0);
        o.taper = uniform(rng, 0.0, 0.03);
        geo.organs.push_back(o);
    }
    return geo;
}

std::pair<VolumeScan, MaskVolume> synth_volume(const PhantomConfig& cfg) {
    const PhantomGeometry geo = phantom_geometry(cfg);
    std::mt19937_64 noise_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> unit(0.0, 1.0);

    VolumeScan vol;
    vol.voxels = Grid3<float>(cfg.shape);
    vol.spacing = cfg.spacing;
    vol.id = "phantom-" + std::to_string(cfg.seed);
    MaskVolume mask;
    mask.voxels = Grid3<uint8_t>(cfg.shape);
    mask.spacing = cfg.spacing;

    const auto kernel = gaussian_kernel(cfg.blur);
    const std::array<Tissue, 5> tissues{cfg.background, cfg.organ, cfg.lumen, cfg.wall, cfg.tumor};
    const int64_t h = cfg.shape[1];
    const int64_t w = cfg.shape[2];
    const double mid = 0.5 * static_cast<double>(cfg.shape[0] - 1);

    for (int64_t z = 0; z < cfg.shape[0]; ++z) {
        const auto& g = geo.slices[static_cast<std::size_t>(z)];
        const double keep_out = g.inner_radius + g.tumor_thickness + 2.0 * cfg.jitter + 3.0;
        Image<uint8_t> labels(h, w, kBackground);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const double yy = static_cast<double>(y);
                const double xx = static_cast<double>(x);
                const double r = std::hypot(yy - g.center_y, xx - g.center_x);
                uint8_t label = kBackground;
                if (r >= keep_out) {
                    for (const auto& o : geo.organs) {
                        const double scale = 1.0 - o.taper * std::abs(static_cast<double>(z) - mid);
                        const double ny = (yy - o.center_y) / (o.semi_y * scale);
                        const double nx = (xx - o.center_x) / (o.semi_x * scale);
                        if (ny * ny + nx * nx <= 1.0) label = kOrgan;
                    }
                }
                if (r < g.inner_radius) label = kLumen;
                else if (r < g.inner_radius + cfg.wall_thickness) label = kWall;
                if (in_tumor(g, yy, xx)) {
                    label = kTumor;
                    mask.voxels(z, y, x) = 1;
                }
                labels(y, x) = label;
            }
        }
        Image<double> mean(h, w);
        for (std::size_t i = 0; i < labels.size(); ++i) mean.data[i] = tissues[labels.data[i]].mean;
        mean = blur(mean, kernel);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const double v = mean(y, x) + tissues[labels(y, x)].stddev * unit(noise_rng);
                vol.voxels(z, y, x) = std::clamp(static_cast<float>(v), kMinHu, kMaxHu);
            }
        }
    }
    return {std::move(vol), std::move(mask)};
}

}  // namespace propnet::data
