#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocstereo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void require_failed(const char* expr, const std::string& msg) {
    throw Error(msg + " [" + expr + "]");
}
}  // namespace detail

#define OCS_REQUIRE(cond, msg)                                 \
    do {                                                       \
        if (!(cond)) ::ocstereo::detail::require_failed(#cond, (msg)); \
    } while (0)

/// Dense row-major 2D grid addressed as (u, v) = (column, row).
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, T fill = T{})
        : width_(width), height_(height), cells_(static_cast<std::size_t>(width) * height, fill) {
        OCS_REQUIRE(width >= 0 && height >= 0, "grid dimensions must be non-negative");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return cells_.empty(); }
    std::size_t size() const { return cells_.size(); }

    T& at(int u, int v) { return cells_[static_cast<std::size_t>(v) * width_ + u]; }
    const T& at(int u, int v) const { return cells_[static_cast<std::size_t>(v) * width_ + u]; }

    bool in_bounds(int u, int v) const { return u >= 0 && u < width_ && v >= 0 && v < height_; }

    T* row(int v) { return cells_.data() + static_cast<std::size_t>(v) * width_; }
    const T* row(int v) const { return cells_.data() + static_cast<std::size_t>(v) * width_; }

    T* data() { return cells_.data(); }
    const T* data() const { return cells_.data(); }

    void fill(T value) { std::fill(cells_.begin(), cells_.end(), value); }

    bool operator==(const Grid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> cells_;
};

struct DisparityUnit {};
struct DepthUnit {};

/// A value grid with a validity mask. Disparity and depth maps share this
/// representation; the unit tag keeps them from being mixed up. Conversions
/// between the two never resample.
template <typename UnitTag>
struct ValueMap {
    Grid<double> values;
    Grid<std::uint8_t> valid;

    ValueMap() = default;
    ValueMap(int width, int height)
        : values(width, height, 0.0), valid(width, height, 0) {}

    int width() const { return values.width(); }
    int height() const { return values.height(); }

    bool is_valid(int u, int v) const { return valid.at(u, v) != 0; }

    void set(int u, int v, double value) {
        values.at(u, v) = value;
        valid.at(u, v) = 1;
    }
    void invalidate(int u, int v) {
        values.at(u, v) = 0.0;
        valid.at(u, v) = 0;
    }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (int v = 0; v < height(); ++v)
            for (int u = 0; u < width(); ++u)
                if (valid.at(u, v)) ++n;
        return n;
    }
};

using GlobalDisparityMap = ValueMap<DisparityUnit>;
using DepthMap = ValueMap<DepthUnit>;

/// Camera-frame point: x right, y down, z forward, in meters.
using Point3D = std::array<double, 3>;

/// Interleaved float image with intensities normalized to [0, 1].
/// Coordinate convention: u rightward, v downward, origin at the top-left
/// pixel center.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels = 1, float fill = 0.f)
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {
        OCS_REQUIRE(width >= 0 && height >= 0 && channels >= 1, "bad image dimensions");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }

    float& at(int u, int v, int c = 0) {
        return data_[(static_cast<std::size_t>(v) * width_ + u) * channels_ + c];
    }
    float at(int u, int v, int c = 0) const {
        return data_[(static_cast<std::size_t>(v) * width_ + u) * channels_ + c];
    }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<float> data_;
};

/// Axis-aligned 2D box in pixel coordinates.
struct Box2D {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double center_u() const { return 0.5 * (x_min + x_max); }
    double center_v() const { return 0.5 * (y_min + y_max); }
    double area() const { return degenerate() ? 0.0 : width() * height(); }
    bool degenerate() const { return !(x_max > x_min && y_max > y_min); }

    Box2D clipped(double image_width, double image_height) const {
        return Box2D{std::clamp(x_min, 0.0, image_width), std::clamp(y_min, 0.0, image_height),
                     std::clamp(x_max, 0.0, image_width), std::clamp(y_max, 0.0, image_height)};
    }

    bool operator==(const Box2D&) const = default;
};

/// Axis-aligned intersection-over-union.
inline double iou_2d(const Box2D& a, const Box2D& b) {
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

/// 3D box in the camera frame (x right, y down, z forward), yaw about the
/// vertical (y) axis. `center` is the geometric center; `length` spans the
/// heading direction, `width` the perpendicular ground direction, `height`
/// the vertical.
struct OrientedBox3D {
    std::array<double, 3> center{0.0, 0.0, 0.0};
    double length = 0.0;
    double width = 0.0;
    double height = 0.0;
    double yaw = 0.0;

    void validate() const {
        OCS_REQUIRE(length > 0.0 && width > 0.0 && height > 0.0, "box dimensions must be positive");
        OCS_REQUIRE(yaw > -std::numbers::pi - 1e-12 && yaw <= std::numbers::pi + 1e-12,
                    "yaw must lie in (-pi, pi]");
    }

    /// Ground-plane (x, z) corners, counter-clockwise when viewed from above.
    std::array<std::array<double, 2>, 4> bev_corners() const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        const double hl = 0.5 * length, hw = 0.5 * width;
        std::array<std::array<double, 2>, 4> out{};
        const double dx[4] = {hl, hl, -hl, -hl};
        const double dz[4] = {hw, -hw, -hw, hw};
        for (int i = 0; i < 4; ++i) {
            out[i][0] = center[0] + dx[i] * c + dz[i] * s;
            out[i][1] = center[2] - dx[i] * s + dz[i] * c;
        }
        return out;
    }

    /// All 8 corners: the 4 BEV corners at the top face (y - h/2) then the
    /// bottom face (y + h/2). y points down.
    std::array<std::array<double, 3>, 8> corners() const {
        const auto bev = bev_corners();
        std::array<std::array<double, 3>, 8> out{};
        for (int i = 0; i < 4; ++i) {
            out[i] = {bev[i][0], center[1] - 0.5 * height, bev[i][1]};
            out[i + 4] = {bev[i][0], center[1] + 0.5 * height, bev[i][1]};
        }
        return out;
    }

    double y_top() const { return center[1] - 0.5 * height; }
    double y_bottom() const { return center[1] + 0.5 * height; }

    bool contains(const Point3D& p) const {
        if (std::abs(p[1] - center[1]) > 0.5 * height) return false;
        // Rotate the offset into the box frame (inverse of bev_corners).
        const double c = std::cos(yaw), s = std::sin(yaw);
        const double wx = p[0] - center[0], wz = p[2] - center[2];
        const double dx = wx * c - wz * s;
        const double dz = wx * s + wz * c;
        return std::abs(dx) <= 0.5 * length && std::abs(dz) <= 0.5 * width;
    }

    double z_far_face() const {
        double zmax = -std::numeric_limits<double>::infinity();
        for (const auto& c : bev_corners()) zmax = std::max(zmax, c[1]);
        return zmax;
    }
};

// Deterministic helpers on top of std::mt19937_64. The raw engine sequence is
// pinned by the standard; the scaling here avoids the implementation-defined
// std distributions so outputs are identical across platforms.
namespace rng {

inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
    return lo + (hi - lo) * uniform01(gen);
}

/// Uniform integer in [lo, hi] inclusive.
inline int uniform_int(std::mt19937_64& gen, int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - lo + 1;
    return lo + static_cast<int>(gen() % span);
}

}  // namespace rng

}  // namespace ocstereo
