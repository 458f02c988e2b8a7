#pragma once

#include <cmath>

#include "ocstereo/core.hpp"

namespace ocstereo {

/// Bilinear sample of one channel at a fractional pixel position, clamped to
/// the image border.
inline float bilinear_sample(const Image& img, double x, double y, int c = 0) {
    const int w = img.width(), h = img.height();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
    const double bot = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
    return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

/// Crops `box` out of `img` and bilinearly resizes it to out_w x out_h.
/// Output pixel (i, j) samples the source at
///   x = box.x_min + i * box.width() / out_w,
///   y = box.y_min + j * box.height() / out_h,
/// the same lattice the local-disparity coordinate transform uses, so image
/// crops and disparity crops stay aligned.
inline Image crop_resize_bilinear(const Image& img, const Box2D& box, int out_w, int out_h) {
    OCS_REQUIRE(out_w >= 1 && out_h >= 1, "crop size must be at least 1x1");
    OCS_REQUIRE(!box.degenerate(), "cannot crop a degenerate box");
    Image out(out_w, out_h, img.channels());
    const double sx = box.width() / out_w;
    const double sy = box.height() / out_h;
    for (int j = 0; j < out_h; ++j) {
        const double y = box.y_min + j * sy;
        for (int i = 0; i < out_w; ++i) {
            const double x = box.x_min + i * sx;
            for (int c = 0; c < img.channels(); ++c) out.at(i, j, c) = bilinear_sample(img, x, y, c);
        }
    }
    return out;
}

/// Nearest-neighbor crop-resize of a validity-masked grid on the same lattice
/// as crop_resize_bilinear. Out-of-bounds source pixels come back invalid.
template <typename UnitTag>
inline ValueMap<UnitTag> nn_crop_resize(const ValueMap<UnitTag>& map, const Box2D& box,
                                        int out_w, int out_h) {
    OCS_REQUIRE(out_w >= 1 && out_h >= 1, "crop size must be at least 1x1");
    OCS_REQUIRE(!box.degenerate(), "cannot crop a degenerate box");
    ValueMap<UnitTag> out(out_w, out_h);
    const double sx = box.width() / out_w;
    const double sy = box.height() / out_h;
    for (int j = 0; j < out_h; ++j) {
        const int sv = static_cast<int>(std::lround(box.y_min + j * sy));
        for (int i = 0; i < out_w; ++i) {
            const int su = static_cast<int>(std::lround(box.x_min + i * sx));
            if (!map.values.in_bounds(su, sv) || !map.is_valid(su, sv)) continue;
            out.set(i, j, map.values.at(su, sv));
        }
    }
    return out;
}

/// Nearest-neighbor crop-resize of a label grid (e.g. an instance map);
/// out-of-bounds pixels get `fill`.
template <typename T>
inline Grid<T> nn_crop_resize_grid(const Grid<T>& grid, const Box2D& box, int out_w, int out_h,
                                   T fill = T{}) {
    OCS_REQUIRE(out_w >= 1 && out_h >= 1, "crop size must be at least 1x1");
    OCS_REQUIRE(!box.degenerate(), "cannot crop a degenerate box");
    Grid<T> out(out_w, out_h, fill);
    const double sx = box.width() / out_w;
    const double sy = box.height() / out_h;
    for (int j = 0; j < out_h; ++j) {
        const int sv = static_cast<int>(std::lround(box.y_min + j * sy));
        for (int i = 0; i < out_w; ++i) {
            const int su = static_cast<int>(std::lround(box.x_min + i * sx));
            if (grid.in_bounds(su, sv)) out.at(i, j) = grid.at(su, sv);
        }
    }
    return out;
}

/// ITU-R 601 luma. Single-channel images pass through unchanged.
inline Grid<float> grayscale(const Image& img) {
    Grid<float> out(img.width(), img.height(), 0.f);
    if (img.channels() == 1) {
        for (int v = 0; v < img.height(); ++v)
            for (int u = 0; u < img.width(); ++u) out.at(u, v) = img.at(u, v, 0);
        return out;
    }
    OCS_REQUIRE(img.channels() >= 3, "grayscale conversion expects 1 or >=3 channels");
    for (int v = 0; v < img.height(); ++v)
        for (int u = 0; u < img.width(); ++u)
            out.at(u, v) = 0.299f * img.at(u, v, 0) + 0.587f * img.at(u, v, 1) + 0.114f * img.at(u, v, 2);
    return out;
}

}  // namespace ocstereo
