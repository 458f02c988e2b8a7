#pragma once

#include "ocstereo/core.hpp"

namespace ocstereo {

inline constexpr double kSsimC1 = 0.01 * 0.01;  // (K1 * L)^2 at unit dynamic range
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Whole-crop structural similarity:
///   (2*mu_l*mu_r + C1)(2*cov + C2) / ((mu_l^2 + mu_r^2 + C1)(var_l + var_r + C2))
/// computed per channel from whole-crop statistics (population variance) and
/// averaged over channels. Crops must share size and channel count.
inline double ssim(const Image& crop_l, const Image& crop_r) {
    OCS_REQUIRE(crop_l.width() == crop_r.width() && crop_l.height() == crop_r.height(),
                "ssim crops must have identical dimensions");
    OCS_REQUIRE(crop_l.channels() == crop_r.channels(), "ssim crops must have identical channel counts");
    OCS_REQUIRE(!crop_l.empty(), "ssim crops must be non-empty");

    const int n = crop_l.width() * crop_l.height();
    double total = 0.0;
    for (int c = 0; c < crop_l.channels(); ++c) {
        double sum_l = 0.0, sum_r = 0.0;
        for (int v = 0; v < crop_l.height(); ++v)
            for (int u = 0; u < crop_l.width(); ++u) {
                sum_l += crop_l.at(u, v, c);
                sum_r += crop_r.at(u, v, c);
            }
        const double mu_l = sum_l / n;
        const double mu_r = sum_r / n;

        double var_l = 0.0, var_r = 0.0, cov = 0.0;
        for (int v = 0; v < crop_l.height(); ++v)
            for (int u = 0; u < crop_l.width(); ++u) {
                const double dl = crop_l.at(u, v, c) - mu_l;
                const double dr = crop_r.at(u, v, c) - mu_r;
                var_l += dl * dl;
                var_r += dr * dr;
                cov += dl * dr;
            }
        var_l /= n;
        var_r /= n;
        cov /= n;

        total += (2.0 * mu_l * mu_r + kSsimC1) * (2.0 * cov + kSsimC2) /
                 ((mu_l * mu_l + mu_r * mu_r + kSsimC1) * (var_l + var_r + kSsimC2));
    }
    return total / crop_l.channels();
}

}  // namespace ocstereo
