#pragma once

#include <cmath>
#include <unordered_map>

#include "ocstereo/camera.hpp"
#include "ocstereo/core.hpp"

namespace ocstereo {

/// Smooth L1 penalty: quadratic inside |x| < 1, linear outside.
inline double smooth_l1(double x) {
    const double a = std::abs(x);
    return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

/// Mean smooth-L1 distance between corresponding points of two object
/// clouds, matched by originating pixel index. Summed over x, y, z per
/// point, averaged over correspondences; throws when the clouds share no
/// pixels.
inline double point_cloud_loss(const ObjectPointCloud& predicted, const ObjectPointCloud& truth) {
    auto key = [](const std::array<int, 2>& px) {
        return (static_cast<std::int64_t>(px[0]) << 32) | static_cast<std::uint32_t>(px[1]);
    };
    std::unordered_map<std::int64_t, std::size_t> truth_by_pixel;
    truth_by_pixel.reserve(truth.points.size());
    for (std::size_t t = 0; t < truth.points.size(); ++t)
        truth_by_pixel.emplace(key(truth.pixel_index[t]), t);

    double total = 0.0;
    std::size_t matched = 0;
    for (std::size_t p = 0; p < predicted.points.size(); ++p) {
        const auto it = truth_by_pixel.find(key(predicted.pixel_index[p]));
        if (it == truth_by_pixel.end()) continue;
        const Point3D& a = predicted.points[p];
        const Point3D& b = truth.points[it->second];
        total += smooth_l1(a[0] - b[0]) + smooth_l1(a[1] - b[1]) + smooth_l1(a[2] - b[2]);
        ++matched;
    }
    OCS_REQUIRE(matched > 0, "point clouds share no pixels");
    return total / static_cast<double>(matched);
}

/// RMSE over pixels valid in both maps; throws when no pixel is valid in both.
inline double depth_rmse(const DepthMap& predicted, const DepthMap& truth) {
    OCS_REQUIRE(predicted.width() == truth.width() && predicted.height() == truth.height(),
                "depth maps must have identical dimensions");
    double sum_sq = 0.0;
    std::size_t n = 0;
    for (int v = 0; v < predicted.height(); ++v) {
        for (int u = 0; u < predicted.width(); ++u) {
            if (!predicted.is_valid(u, v) || !truth.is_valid(u, v)) continue;
            const double e = predicted.values.at(u, v) - truth.values.at(u, v);
            sum_sq += e * e;
            ++n;
        }
    }
    OCS_REQUIRE(n > 0, "no pixel is valid in both depth maps");
    return std::sqrt(sum_sq / static_cast<double>(n));
}

/// Fraction of cloud points that fall outside the ground-truth box after
/// inflating its length/width/height by 2 * margin (margin added on every
/// side). 0 means every point is explained by the object; streaking artifacts
/// push this up.
inline double streaking_index(const ObjectPointCloud& cloud, const OrientedBox3D& box,
                              double margin = 0.3) {
    OCS_REQUIRE(margin >= 0.0, "margin must be non-negative");
    OCS_REQUIRE(!cloud.points.empty(), "cloud is empty");
    OrientedBox3D inflated = box;
    inflated.length += 2.0 * margin;
    inflated.width += 2.0 * margin;
    inflated.height += 2.0 * margin;
    std::size_t outside = 0;
    for (const Point3D& p : cloud.points)
        if (!inflated.contains(p)) ++outside;
    return static_cast<double>(outside) / static_cast<double>(cloud.points.size());
}

}  // namespace ocstereo
