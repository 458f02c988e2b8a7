#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ocstereo/camera.hpp"
#include "ocstereo/core.hpp"
#include "ocstereo/local_disparity.hpp"
#include "ocstereo/resample.hpp"

namespace ocstereo {

struct MatcherOptions {
    int d_local_min = kDefaultLocalDisparityMin;
    int d_local_max = kDefaultLocalDisparityMax;
    int canonical_width = kDefaultCanonicalSize;
    int canonical_height = kDefaultCanonicalSize;
    int census_width = 7;
    int census_height = 9;
    int box_filter_radius = 2;  // 5x5
    int sgm_p1 = 8;
    int sgm_p2 = 96;
    double temperature = 1.0;
    double confidence_min = 0.3;
    double lr_max_diff = 1.5;  // left-right consistency tolerance, canonical px; <= 0 disables

    void validate() const {
        OCS_REQUIRE(d_local_max >= d_local_min, "disparity range must be non-empty");
        OCS_REQUIRE(canonical_width >= 1 && canonical_height >= 1, "canonical size must be positive");
        OCS_REQUIRE(census_width >= 1 && census_height >= 1 && census_width * census_height - 1 <= 64,
                    "census window must fit a 64-bit descriptor");
        OCS_REQUIRE(census_width % 2 == 1 && census_height % 2 == 1, "census window must be odd-sized");
        OCS_REQUIRE(box_filter_radius >= 0, "box filter radius must be non-negative");
        OCS_REQUIRE(sgm_p1 >= 0 && sgm_p2 >= sgm_p1, "need 0 <= P1 <= P2");
        // Aggregated costs are accumulated in 16 bits: 4 paths, each bounded
        // by max census cost (< 64) + P2.
        OCS_REQUIRE(4 * (64 + sgm_p2) <= 65535, "P2 too large for 16-bit aggregation");
        OCS_REQUIRE(temperature > 0.0, "temperature must be positive");
        OCS_REQUIRE(confidence_min >= 0.0 && confidence_min <= 1.0, "confidence floor must lie in [0, 1]");
    }
};

/// Per-pixel, per-candidate matching costs; cost(v, u, k) is the cost of
/// assigning pixel (u, v) disparity d_min + k.
struct CostVolume {
    int width = 0;
    int height = 0;
    int d_min = 0;
    int d_max = -1;
    std::vector<std::uint16_t> costs;  // [(v * width + u) * range + k]

    CostVolume() = default;
    CostVolume(int w, int h, int dmin, int dmax)
        : width(w), height(h), d_min(dmin), d_max(dmax),
          costs(static_cast<std::size_t>(w) * h * (dmax - dmin + 1), 0) {
        OCS_REQUIRE(dmax >= dmin, "disparity range must be non-empty");
    }

    int range() const { return d_max - d_min + 1; }
    std::size_t cell_count() const { return costs.size(); }

    std::uint16_t& at(int u, int v, int k) {
        return costs[(static_cast<std::size_t>(v) * width + u) * range() + k];
    }
    std::uint16_t at(int u, int v, int k) const {
        return costs[(static_cast<std::size_t>(v) * width + u) * range() + k];
    }
    const std::uint16_t* cell(int u, int v) const {
        return costs.data() + (static_cast<std::size_t>(v) * width + u) * range();
    }
};

/// Census transform with border replication: one bit per non-center window
/// pixel, set when the neighbor is darker than the center.
inline Grid<std::uint64_t> census_transform(const Grid<float>& gray, int win_w, int win_h) {
    OCS_REQUIRE(win_w >= 1 && win_h >= 1 && win_w * win_h - 1 <= 64, "census window must fit 64 bits");
    OCS_REQUIRE(win_w % 2 == 1 && win_h % 2 == 1, "census window must be odd-sized");
    const int rx = win_w / 2, ry = win_h / 2;
    const int w = gray.width(), h = gray.height();
    Grid<std::uint64_t> out(w, h, 0);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const float center = gray.at(u, v);
            std::uint64_t bits = 0;
            for (int dy = -ry; dy <= ry; ++dy) {
                const int sv = std::clamp(v + dy, 0, h - 1);
                for (int dx = -rx; dx <= rx; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int su = std::clamp(u + dx, 0, w - 1);
                    bits = (bits << 1) | (gray.at(su, sv) < center ? 1u : 0u);
                }
            }
            out.at(u, v) = bits;
        }
    }
    return out;
}

/// Hamming-distance cost volume between census descriptors of the two crops.
/// cost(v, u, k) compares left pixel (u, v) against right pixel
/// (u - (d_min + k), v); shifts that fall outside the crop get the maximum
/// census cost so the volume stays rectangular.
inline CostVolume build_cost_volume(const Grid<float>& left, const Grid<float>& right, int d_min,
                                    int d_max, int census_w = 7, int census_h = 9) {
    OCS_REQUIRE(d_max >= d_min, "disparity range must be non-empty");
    OCS_REQUIRE(left.width() == right.width() && left.height() == right.height(),
                "crops must have identical dimensions");
    const auto census_l = census_transform(left, census_w, census_h);
    const auto census_r = census_transform(right, census_w, census_h);
    const auto max_cost = static_cast<std::uint16_t>(census_w * census_h - 1);
    CostVolume cv(left.width(), left.height(), d_min, d_max);
    const int range = cv.range();
    for (int v = 0; v < cv.height; ++v) {
        for (int u = 0; u < cv.width; ++u) {
            std::uint16_t* cell = &cv.at(u, v, 0);
            for (int k = 0; k < range; ++k) {
                const int ur = u - (d_min + k);
                cell[k] = (ur >= 0 && ur < cv.width)
                              ? static_cast<std::uint16_t>(
                                    std::popcount(census_l.at(u, v) ^ census_r.at(ur, v)))
                              : max_cost;
            }
        }
    }
    return cv;
}

namespace detail {

/// Per-slice spatial box filter with truncated-window normalization (rounded
/// mean over the in-bounds window); a constant volume passes through
/// unchanged. A rolling window of horizontal-sum rows keeps the working set
/// small even for full-image volumes.
inline CostVolume box_filter_volume(const CostVolume& cv, int radius) {
    if (radius <= 0) return cv;
    const int w = cv.width, h = cv.height, range = cv.range();
    CostVolume out(w, h, cv.d_min, cv.d_max);
    const std::size_t row_elems = static_cast<std::size_t>(w) * range;

    std::vector<std::uint16_t> hcount(w);
    for (int u = 0; u < w; ++u)
        hcount[u] = static_cast<std::uint16_t>(std::min(u + radius, w - 1) - std::max(u - radius, 0) + 1);

    // Horizontal running sums for one row of the volume.
    auto horizontal_sums = [&](int v, std::vector<std::uint32_t>& dst) {
        const std::uint16_t* row = cv.cell(0, v);
        for (int k = 0; k < range; ++k) {
            std::uint32_t s = 0;
            for (int x = 0; x <= std::min(radius, w - 1); ++x) s += row[static_cast<std::size_t>(x) * range + k];
            dst[k] = s;
        }
        for (int u = 1; u < w; ++u) {
            const std::uint32_t* prev = dst.data() + static_cast<std::size_t>(u - 1) * range;
            std::uint32_t* cur = dst.data() + static_cast<std::size_t>(u) * range;
            const int add = u + radius, sub = u - radius - 1;
            for (int k = 0; k < range; ++k) {
                std::uint32_t s = prev[k];
                if (add <= w - 1) s += row[static_cast<std::size_t>(add) * range + k];
                if (sub >= 0) s -= row[static_cast<std::size_t>(sub) * range + k];
                cur[k] = s;
            }
        }
    };

    std::vector<std::vector<std::uint32_t>> ring(2 * radius + 1,
                                                 std::vector<std::uint32_t>(row_elems));
    std::vector<std::uint32_t> colsum(row_elems, 0);
    int lo = 0, hi = -1;
    auto add_row = [&](int v) {
        auto& buf = ring[v % (2 * radius + 1)];
        horizontal_sums(v, buf);
        for (std::size_t i = 0; i < row_elems; ++i) colsum[i] += buf[i];
    };
    auto drop_row = [&](int v) {
        const auto& buf = ring[v % (2 * radius + 1)];
        for (std::size_t i = 0; i < row_elems; ++i) colsum[i] -= buf[i];
    };

    for (int v = 0; v < h; ++v) {
        const int want_lo = std::max(0, v - radius), want_hi = std::min(h - 1, v + radius);
        // Drop before adding: the incoming row reuses the outgoing row's ring
        // slot, so the old sums must be subtracted while they still exist.
        while (lo < want_lo) drop_row(lo++);
        while (hi < want_hi) add_row(++hi);
        const std::uint32_t rows_in = static_cast<std::uint32_t>(hi - lo + 1);
        std::uint16_t* dst = &out.at(0, v, 0);
        for (int u = 0; u < w; ++u) {
            const std::uint32_t n = rows_in * hcount[u];
            const std::uint32_t* src = colsum.data() + static_cast<std::size_t>(u) * range;
            for (int k = 0; k < range; ++k)
                dst[static_cast<std::size_t>(u) * range + k] =
                    static_cast<std::uint16_t>((src[k] + n / 2) / n);
        }
    }
    return out;
}

/// One semi-global pass along direction (du, dv), accumulating path costs
/// into `acc`. Standard recurrence with the running minimum subtracted, which
/// bounds every path value by max cost + P2 (so four paths fit in 16 bits).
inline void sgm_pass(const CostVolume& cv, int du, int dv, int p1, int p2,
                     std::vector<std::uint16_t>& acc) {
    const int range = cv.range();
    const int w = cv.width, h = cv.height;
    std::vector<std::uint32_t> prev(range), cur(range);

    auto scan = [&](int u0, int v0) {
        bool first = true;
        for (int u = u0, v = v0; u >= 0 && u < w && v >= 0 && v < h; u += du, v += dv) {
            const std::uint16_t* cost = cv.cell(u, v);
            std::uint16_t* dst = &acc[(static_cast<std::size_t>(v) * w + u) * range];
            if (first) {
                for (int k = 0; k < range; ++k) {
                    cur[k] = cost[k];
                    dst[k] = static_cast<std::uint16_t>(dst[k] + cur[k]);
                }
                first = false;
            } else {
                std::uint32_t prev_min = prev[0];
                for (int k = 1; k < range; ++k) prev_min = std::min(prev_min, prev[k]);
                for (int k = 0; k < range; ++k) {
                    std::uint32_t best = prev[k];
                    if (k > 0) best = std::min(best, prev[k - 1] + p1);
                    if (k + 1 < range) best = std::min(best, prev[k + 1] + p1);
                    best = std::min(best, prev_min + p2);
                    cur[k] = cost[k] + best - prev_min;
                    dst[k] = static_cast<std::uint16_t>(dst[k] + cur[k]);
                }
            }
            std::swap(prev, cur);
        }
    };

    if (du == 1) {
        for (int v = 0; v < h; ++v) scan(0, v);
    } else if (du == -1) {
        for (int v = 0; v < h; ++v) scan(w - 1, v);
    } else if (dv == 1) {
        for (int u = 0; u < w; ++u) scan(u, 0);
    } else {
        for (int u = 0; u < w; ++u) scan(u, h - 1);
    }
}

}  // namespace detail

/// Cost aggregation: per-slice 5x5 box filter followed by 4-path semi-global
/// smoothing with penalties P1/P2, averaged over paths so a constant volume
/// passes through unchanged. Takes the volume by value so callers can move
/// large volumes through without an extra copy.
inline CostVolume aggregate(CostVolume cv, const MatcherOptions& options = {}) {
    options.validate();
    if (options.box_filter_radius > 0)
        cv = detail::box_filter_volume(cv, options.box_filter_radius);
    std::vector<std::uint16_t> acc(cv.cell_count(), 0);
    detail::sgm_pass(cv, 1, 0, options.sgm_p1, options.sgm_p2, acc);
    detail::sgm_pass(cv, -1, 0, options.sgm_p1, options.sgm_p2, acc);
    detail::sgm_pass(cv, 0, 1, options.sgm_p1, options.sgm_p2, acc);
    detail::sgm_pass(cv, 0, -1, options.sgm_p1, options.sgm_p2, acc);
    for (std::size_t idx = 0; idx < acc.size(); ++idx)
        cv.costs[idx] = static_cast<std::uint16_t>((acc[idx] + 2) / 4);
    return cv;
}

struct SoftArgminResult {
    Grid<double> disparity;
    Grid<double> confidence;  // peak softmax mass per pixel
};

/// Sub-pixel disparity as the softmax-weighted mean over candidates:
///   d(u, v) = sum_k d_k * softmax_k(-cost(v, u, k) / T)
/// Confidence is the largest softmax weight; output is clamped to the range.
inline SoftArgminResult soft_argmin(const CostVolume& cv, double temperature = 1.0) {
    OCS_REQUIRE(temperature > 0.0, "temperature must be positive");
    SoftArgminResult out{Grid<double>(cv.width, cv.height, 0.0), Grid<double>(cv.width, cv.height, 0.0)};
    const int range = cv.range();
    std::vector<double> weights(range);
    for (int v = 0; v < cv.height; ++v) {
        for (int u = 0; u < cv.width; ++u) {
            const std::uint16_t* cost = cv.cell(u, v);
            std::uint16_t min_cost = cost[0];
            for (int k = 1; k < range; ++k) min_cost = std::min(min_cost, cost[k]);
            double z = 0.0, mean = 0.0, peak = 0.0;
            for (int k = 0; k < range; ++k) {
                const double wgt = std::exp(-(static_cast<double>(cost[k]) - min_cost) / temperature);
                weights[k] = wgt;
                z += wgt;
            }
            for (int k = 0; k < range; ++k) {
                const double wgt = weights[k] / z;
                mean += (cv.d_min + k) * wgt;
                peak = std::max(peak, wgt);
            }
            out.disparity.at(u, v) = std::clamp(mean, static_cast<double>(cv.d_min),
                                                static_cast<double>(cv.d_max));
            out.confidence.at(u, v) = peak;
        }
    }
    return out;
}

/// Right-crop disparity inferred from the left-reference volume by scanning
/// its diagonals: right pixel u_r sees candidate d_k at left pixel u_r + d_k.
/// Cells whose whole diagonal leaves the crop stay invalid. Feeds the
/// left-right consistency check without a second census/aggregation pass.
inline ValueMap<DisparityUnit> right_view_disparity(const CostVolume& cv, double temperature) {
    OCS_REQUIRE(temperature > 0.0, "temperature must be positive");
    ValueMap<DisparityUnit> out(cv.width, cv.height);
    const int range = cv.range();
    std::vector<double> weights(range);
    for (int v = 0; v < cv.height; ++v) {
        for (int ur = 0; ur < cv.width; ++ur) {
            const int k_lo = std::max(0, -ur - cv.d_min);
            const int k_hi = std::min(range - 1, cv.width - 1 - ur - cv.d_min);
            if (k_lo > k_hi) continue;
            double min_cost = 1e18;
            for (int k = k_lo; k <= k_hi; ++k)
                min_cost = std::min(min_cost, static_cast<double>(cv.at(ur + cv.d_min + k, v, k)));
            double z = 0.0, mean = 0.0;
            for (int k = k_lo; k <= k_hi; ++k) {
                const double wgt =
                    std::exp(-(cv.at(ur + cv.d_min + k, v, k) - min_cost) / temperature);
                weights[k] = wgt;
                z += wgt;
            }
            for (int k = k_lo; k <= k_hi; ++k) mean += (cv.d_min + k) * (weights[k] / z);
            out.set(ur, v, mean);
        }
    }
    return out;
}

struct MatchResult {
    LocalDisparityMap local;     // masked, confidence-filtered
    Grid<double> confidence;
    DisparityRegion global;      // reconstructed at the original box location
    ObjectPointCloud cloud;
};

/// Full object-centric match of one associated RoI pair: canonical crops ->
/// cost volume -> aggregation -> soft-argmin -> instance mask and confidence
/// floor -> global disparity -> depth -> 3D points. An empty mask yields an
/// empty cloud.
inline MatchResult match_pair(const Box2D& left_box, const Box2D& right_box, const Image& left_image,
                              const Image& right_image, const InstanceMask& mask, const CameraRig& rig,
                              const MatcherOptions& options = {}) {
    options.validate();
    rig.validate();
    const int w = options.canonical_width, h = options.canonical_height;
    OCS_REQUIRE(mask.mask.width() == w && mask.mask.height() == h,
                "instance mask must match the canonical size");

    const Grid<float> left_crop = grayscale(crop_resize_bilinear(left_image, left_box, w, h));
    const Grid<float> right_crop = grayscale(crop_resize_bilinear(right_image, right_box, w, h));

    CostVolume cv = build_cost_volume(left_crop, right_crop, options.d_local_min, options.d_local_max,
                                      options.census_width, options.census_height);
    cv = aggregate(std::move(cv), options);
    SoftArgminResult sa = soft_argmin(cv, options.temperature);
    const bool lr_check = options.lr_max_diff > 0.0;
    const ValueMap<DisparityUnit> right_disp =
        lr_check ? right_view_disparity(cv, options.temperature) : ValueMap<DisparityUnit>();

    MatchResult result;
    result.local = LocalDisparityMap(w, h, left_box, right_box);
    result.confidence = std::move(sa.confidence);
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
            if (!mask.mask.at(i, j) || result.confidence.at(i, j) < options.confidence_min)
                continue;
            const double d = sa.disparity.at(i, j);
            if (lr_check) {
                // Boundary cells whose cost support bleeds off the object
                // disagree with the right crop's view of the same match.
                const int ir = static_cast<int>(std::lround(i - d));
                if (ir >= 0 && ir < w && right_disp.is_valid(ir, j) &&
                    std::abs(d - right_disp.values.at(ir, j)) > options.lr_max_diff)
                    continue;
            }
            result.local.set_local(i, j, d);
        }

    result.global = local_to_global(result.local);
    const DepthMap depth = disparity_to_depth(result.global.map, rig);
    result.cloud = back_project(depth, rig, result.global.u0, result.global.v0, mask.instance_id);
    return result;
}

struct FullImageMatcherOptions {
    int num_disparities = 192;  // candidates 0..191, the full-image convention
    int census_width = 7;
    int census_height = 9;
    int box_filter_radius = 2;
    int sgm_p1 = 8;
    int sgm_p2 = 96;
    double temperature = 1.0;
    double confidence_min = 0.3;
};

/// Baseline matcher over the whole image pair with a global disparity range;
/// used for runtime and streaking comparisons against the object-centric path.
inline GlobalDisparityMap match_full_image(const Image& left_image, const Image& right_image,
                                           const FullImageMatcherOptions& options = {}) {
    OCS_REQUIRE(options.num_disparities >= 1, "need at least one disparity candidate");
    MatcherOptions agg;
    agg.d_local_min = 0;
    agg.d_local_max = options.num_disparities - 1;
    agg.census_width = options.census_width;
    agg.census_height = options.census_height;
    agg.box_filter_radius = options.box_filter_radius;
    agg.sgm_p1 = options.sgm_p1;
    agg.sgm_p2 = options.sgm_p2;
    agg.temperature = options.temperature;
    agg.confidence_min = options.confidence_min;

    const Grid<float> left = grayscale(left_image);
    const Grid<float> right = grayscale(right_image);
    CostVolume cv = build_cost_volume(left, right, 0, options.num_disparities - 1,
                                      options.census_width, options.census_height);
    cv = aggregate(std::move(cv), agg);
    const SoftArgminResult sa = soft_argmin(cv, options.temperature);

    GlobalDisparityMap out(left_image.width(), left_image.height());
    for (int v = 0; v < out.height(); ++v)
        for (int u = 0; u < out.width(); ++u)
            if (sa.confidence.at(u, v) >= options.confidence_min)
                out.set(u, v, sa.disparity.at(u, v));
    return out;
}

/// Cost-volume cell count at the given canonical size and local range.
inline std::size_t object_centric_cell_count(const MatcherOptions& options = {}) {
    return static_cast<std::size_t>(options.canonical_width) * options.canonical_height *
           (options.d_local_max - options.d_local_min + 1);
}

/// Cost-volume cell count for a full-image matcher at the given frame size.
inline std::size_t full_image_cell_count(int width, int height, int num_disparities = 192) {
    return static_cast<std::size_t>(width) * height * num_disparities;
}

}  // namespace ocstereo
