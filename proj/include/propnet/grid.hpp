#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace propnet {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major 2D array (y, x).
template <class T>
struct Image {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<T> data;

    Image() = default;
    Image(int64_t h, int64_t w, T fill = T{})
        : height(h), width(w), data(static_cast<std::size_t>(h * w), fill) {}

    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] bool same_shape(const auto& other) const {
        return height == other.height && width == other.width;
    }

    T& operator()(int64_t y, int64_t x) { return data[static_cast<std::size_t>(y * width + x)]; }
    const T& operator()(int64_t y, int64_t x) const {
        return data[static_cast<std::size_t>(y * width + x)];
    }

    bool operator==(const Image&) const = default;
};

using MaskSlice = Image<uint8_t>;

/// Dense C-order 3D array indexed (z, y, x).
template <class T>
struct Grid3 {
    std::array<int64_t, 3> shape{0, 0, 0};
    std::vector<T> data;

    Grid3() = default;
    Grid3(std::array<int64_t, 3> s, T fill = T{})
        : shape(s), data(static_cast<std::size_t>(s[0] * s[1] * s[2]), fill) {}

    [[nodiscard]] int64_t depth() const { return shape[0]; }
    [[nodiscard]] int64_t height() const { return shape[1]; }
    [[nodiscard]] int64_t width() const { return shape[2]; }
    [[nodiscard]] int64_t slice_size() const { return shape[1] * shape[2]; }
    [[nodiscard]] std::size_t size() const { return data.size(); }

    [[nodiscard]] std::size_t index(int64_t z, int64_t y, int64_t x) const {
        return static_cast<std::size_t>((z * shape[1] + y) * shape[2] + x);
    }
    T& operator()(int64_t z, int64_t y, int64_t x) { return data[index(z, y, x)]; }
    const T& operator()(int64_t z, int64_t y, int64_t x) const { return data[index(z, y, x)]; }

    [[nodiscard]] Image<T> slice(int64_t z) const {
        Image<T> out(shape[1], shape[2]);
        const auto begin = data.begin() + static_cast<std::ptrdiff_t>(z * slice_size());
        std::copy(begin, begin + slice_size(), out.data.begin());
        return out;
    }

    void set_slice(int64_t z, const Image<T>& img) {
        if (img.height != shape[1] || img.width != shape[2]) {
            throw ShapeError("slice shape does not match volume");
        }
        std::copy(img.data.begin(), img.data.end(),
                  data.begin() + static_cast<std::ptrdiff_t>(z * slice_size()));
    }

    bool operator==(const Grid3&) const = default;
};

/// Voxel spacing in millimetres per voxel.
struct Spacing {
    double z = 1.0;
    double y = 1.0;
    double x = 1.0;

    bool operator==(const Spacing&) const = default;
};

struct VolumeScan {
    Grid3<float> voxels;
    Spacing spacing;
    std::string id;

    /// Throws ConfigError if spacing is nonpositive or any voxel is non-finite.
    void validate() const;
};

struct MaskVolume {
    Grid3<uint8_t> voxels;
    Spacing spacing;

    [[nodiscard]] int64_t count() const;
    [[nodiscard]] int64_t slice_area(int64_t z) const;
};

[[nodiscard]] int64_t count_foreground(const MaskSlice& m);

}  // namespace propnet
