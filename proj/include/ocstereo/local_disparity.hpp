#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ocstereo/camera.hpp"
#include "ocstereo/core.hpp"
#include "ocstereo/resample.hpp"

namespace ocstereo {

inline constexpr int kDefaultLocalDisparityMin = -64;
inline constexpr int kDefaultLocalDisparityMax = 90;
inline constexpr int kDefaultCanonicalSize = 224;

/// Signed disparity between two canonically resized RoI crops, together with
/// the original (unresized) box geometry needed to reverse the transform.
/// Canonical pixel i of the left crop sits at global column
///   x_l = e_l + i * (w_b_left / w),
/// which reduces to the plain offset form when the box is already at
/// canonical width.
struct LocalDisparityMap {
    Grid<double> values;       // w x h signed local disparity, pixels
    Grid<std::uint8_t> valid;  // false outside the instance / dropped cells
    Box2D left_box;            // original left RoI, global pixels
    Box2D right_box;           // original right RoI, global pixels

    LocalDisparityMap() = default;
    LocalDisparityMap(int w, int h, const Box2D& left, const Box2D& right)
        : values(w, h, 0.0), valid(w, h, 0), left_box(left), right_box(right) {
        OCS_REQUIRE(!left.degenerate() && !right.degenerate(), "RoI boxes must have positive extent");
    }

    int canonical_width() const { return values.width(); }
    int canonical_height() const { return values.height(); }

    double e_l() const { return left_box.x_min; }
    double e_r() const { return right_box.x_min; }
    double w_b_left() const { return left_box.width(); }
    double w_b_right() const { return right_box.width(); }

    bool is_valid(int i, int j) const { return valid.at(i, j) != 0; }

    void set_local(int i, int j, double d) {
        values.at(i, j) = d;
        valid.at(i, j) = 1;
    }
    void invalidate(int i, int j) {
        values.at(i, j) = 0.0;
        valid.at(i, j) = 0;
    }

    /// Global column of canonical left-crop pixel i.
    double x_left(int i) const { return e_l() + i * (w_b_left() / canonical_width()); }

    /// Global column of the matching right-image point for canonical pixel
    /// (i, j); i_r = i - d_l.
    double x_right(int i, int j) const {
        return e_r() + (i - values.at(i, j)) * (w_b_right() / canonical_width());
    }

    /// Reconstructed global disparity of canonical pixel (i, j).
    double global_disparity(int i, int j) const { return x_left(i) - x_right(i, j); }
};

struct InstanceMask {
    Grid<std::uint8_t> mask;  // aligned to the canonical left RoI
    int instance_id = -1;
};

/// Local RoI column coordinates: every row is 0..w-1.
inline Grid<int> local_coords(int w, int h) {
    OCS_REQUIRE(w >= 1 && h >= 1, "coordinate grid must be at least 1x1");
    Grid<int> out(w, h, 0);
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) out.at(i, j) = i;
    return out;
}

/// Builds the canonical local disparity map for an associated box pair from a
/// full-resolution global disparity map:
/// the global map is nearest-neighbor resized onto the canonical left-RoI
/// lattice, then per cell
///   x_l = e_l + i * (w_b_left / w),  x_r = x_l - d_g,
///   i_r = (x_r - e_r) * w / w_b_right,  d_l = i - i_r.
/// Cells whose source disparity is missing stay invalid.
inline LocalDisparityMap global_to_local(const GlobalDisparityMap& global, const Box2D& left_box,
                                         const Box2D& right_box, int w, int h) {
    OCS_REQUIRE(w >= 1 && h >= 1, "canonical size must be at least 1x1");
    OCS_REQUIRE(!left_box.degenerate() && !right_box.degenerate(), "RoI boxes must have positive extent");
    LocalDisparityMap out(w, h, left_box, right_box);
    const GlobalDisparityMap resized = nn_crop_resize(global, left_box, w, h);
    const double scale_r = w / right_box.width();
    for (int j = 0; j < h; ++j) {
        for (int i = 0; i < w; ++i) {
            if (!resized.is_valid(i, j)) continue;
            const double d_g = resized.values.at(i, j);
            const double x_l = out.x_left(i);
            const double x_r = x_l - d_g;
            const double i_r = (x_r - right_box.x_min) * scale_r;
            out.set_local(i, j, i - i_r);
        }
    }
    return out;
}

/// A global disparity region anchored at integer pixel (u0, v0).
struct DisparityRegion {
    int u0 = 0;
    int v0 = 0;
    GlobalDisparityMap map;

    bool is_valid(int gu, int gv) const {
        const int u = gu - u0, v = gv - v0;
        return map.values.in_bounds(u, v) && map.is_valid(u, v);
    }
};

/// Reverses global_to_local. Each integer pixel of the original left box takes
/// the disparity of its nearest canonical cell, reconstructed algebraically as
/// x_l(i) - x_r(i, j); values are exact, placement is quantized by the
/// nearest-neighbor resize.
inline DisparityRegion local_to_global(const LocalDisparityMap& local) {
    const int w = local.canonical_width();
    const int h = local.canonical_height();
    DisparityRegion region;
    region.u0 = static_cast<int>(std::lround(local.left_box.x_min));
    region.v0 = static_cast<int>(std::lround(local.left_box.y_min));
    const int out_w = std::max(1, static_cast<int>(std::lround(local.left_box.x_max)) - region.u0);
    const int out_h = std::max(1, static_cast<int>(std::lround(local.left_box.y_max)) - region.v0);
    region.map = GlobalDisparityMap(out_w, out_h);
    const double inv_sx = w / local.w_b_left();
    const double inv_sy = h / local.left_box.height();
    for (int v = 0; v < out_h; ++v) {
        const int j = std::clamp(static_cast<int>(std::lround((region.v0 + v - local.left_box.y_min) * inv_sy)), 0, h - 1);
        for (int u = 0; u < out_w; ++u) {
            const int i = std::clamp(static_cast<int>(std::lround((region.u0 + u - local.left_box.x_min) * inv_sx)), 0, w - 1);
            if (!local.is_valid(i, j)) continue;
            region.map.set(u, v, local.global_disparity(i, j));
        }
    }
    return region;
}

/// Invalidates cells outside the instance mask.
inline void apply_mask(LocalDisparityMap& local, const InstanceMask& mask) {
    OCS_REQUIRE(mask.mask.width() == local.canonical_width() &&
                    mask.mask.height() == local.canonical_height(),
                "instance mask must match the canonical RoI size");
    for (int j = 0; j < local.canonical_height(); ++j)
        for (int i = 0; i < local.canonical_width(); ++i)
            if (!mask.mask.at(i, j)) local.invalidate(i, j);
}

struct CompositeInput {
    LocalDisparityMap local;
    InstanceMask mask;
};

/// Paints per-instance disparities into one full-resolution map in farthest to
/// closest order, so nearer instances overwrite farther ones on overlap. The
/// depth order is recomputed internally (median reconstructed depth), making
/// the result independent of input ordering.
inline GlobalDisparityMap composite(std::span<const CompositeInput> instances, const CameraRig& rig,
                                    int width, int height) {
    rig.validate();
    struct Prepared {
        DisparityRegion region;
        double median_depth;
        int instance_id;
    };
    std::vector<Prepared> prepared;
    prepared.reserve(instances.size());
    for (const auto& input : instances) {
        LocalDisparityMap masked = input.local;
        apply_mask(masked, input.mask);
        DisparityRegion region = local_to_global(masked);
        std::vector<double> depths;
        for (int v = 0; v < region.map.height(); ++v)
            for (int u = 0; u < region.map.width(); ++u)
                if (region.map.is_valid(u, v) && region.map.values.at(u, v) > kMinPositiveDisparity)
                    depths.push_back(rig.depth_from_disparity(region.map.values.at(u, v)));
        if (depths.empty()) continue;
        std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
        double median = depths[depths.size() / 2];
        if (depths.size() % 2 == 0) {
            const double lower = *std::max_element(depths.begin(), depths.begin() + depths.size() / 2);
            median = 0.5 * (median + lower);
        }
        prepared.push_back({std::move(region), median, input.mask.instance_id});
    }
    std::sort(prepared.begin(), prepared.end(), [](const Prepared& a, const Prepared& b) {
        if (a.median_depth != b.median_depth) return a.median_depth > b.median_depth;
        return a.instance_id < b.instance_id;
    });

    GlobalDisparityMap out(width, height);
    for (const auto& p : prepared) {
        for (int v = 0; v < p.region.map.height(); ++v) {
            const int gv = p.region.v0 + v;
            if (gv < 0 || gv >= height) continue;
            for (int u = 0; u < p.region.map.width(); ++u) {
                const int gu = p.region.u0 + u;
                if (gu < 0 || gu >= width) continue;
                if (!p.region.map.is_valid(u, v)) continue;
                out.set(gu, gv, p.region.map.values.at(u, v));
            }
        }
    }
    return out;
}

}  // namespace ocstereo
