#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ocstereo/core.hpp"
#include "ocstereo/resample.hpp"
#include "ocstereo/ssim.hpp"

namespace ocstereo {

struct Detection2D {
    Box2D box;
    double score = 0.0;
    std::string label;

    void validate() const {
        OCS_REQUIRE(!box.degenerate(), "detection box must have positive extent");
        OCS_REQUIRE(score >= 0.0 && score <= 1.0, "detection score must lie in [0, 1]");
    }
};

/// Linear map from 2D box height to expected center disparity, with the
/// residual spread used for the adaptive association gate.
struct HeightDisparityModel {
    double slope = 0.0;
    double intercept = 0.0;
    double sigma = 0.0;

    double expected_disparity(double box_height) const { return slope * box_height + intercept; }

    void validate() const {
        OCS_REQUIRE(sigma >= 0.0, "sigma must be non-negative");
        OCS_REQUIRE(slope > 0.0, "slope must be positive (taller means closer means larger disparity)");
    }
};

struct HeightDisparitySample {
    double height = 0.0;     // left box height, pixels
    double disparity = 0.0;  // center_u(left) - center_u(right), pixels
};

/// Ordinary least squares of disparity on height; sigma is the population
/// standard deviation of the residuals.
inline HeightDisparityModel fit_height_disparity(const std::vector<HeightDisparitySample>& samples) {
    OCS_REQUIRE(samples.size() >= 2, "need at least two samples to fit");
    double mean_h = 0.0, mean_d = 0.0;
    for (const auto& s : samples) {
        mean_h += s.height;
        mean_d += s.disparity;
    }
    mean_h /= samples.size();
    mean_d /= samples.size();

    double s_hh = 0.0, s_hd = 0.0;
    for (const auto& s : samples) {
        s_hh += (s.height - mean_h) * (s.height - mean_h);
        s_hd += (s.height - mean_h) * (s.disparity - mean_d);
    }
    OCS_REQUIRE(s_hh > 0.0, "degenerate fit: all sample heights are equal");

    HeightDisparityModel model;
    model.slope = s_hd / s_hh;
    model.intercept = mean_d - model.slope * mean_h;

    double ss_res = 0.0;
    for (const auto& s : samples) {
        const double r = s.disparity - model.expected_disparity(s.height);
        ss_res += r * r;
    }
    model.sigma = std::sqrt(ss_res / samples.size());
    return model;
}

struct RoiPair {
    Detection2D left;
    Detection2D right;
    double ssim_score = 0.0;
    int left_index = -1;
    int right_index = -1;
};

struct AssociationResult {
    std::vector<RoiPair> pairs;
    std::vector<int> unmatched_left;   // indices into the left detections
    std::vector<int> unmatched_right;  // indices into the right detections
};

struct AssociationOptions {
    double score_threshold = 0.6;  // t_d; applied by the pipeline, not here
    int crop_size = 128;
    double gate_sigma_floor = 1.0;  // gate tolerance when the fit is noiseless
};

/// Matches left and right detections. Candidate pairs must share a class,
/// have a non-negative center disparity, and sit within three standard
/// deviations of the height-predicted disparity; survivors are scored by SSIM
/// over canonically resized crops and matched greedily from the highest score
/// (ties broken by lower left index, then lower right index). Leftover boxes
/// are reported unmatched.
inline AssociationResult associate(
    const std::vector<Detection2D>& left, const std::vector<Detection2D>& right,
    const std::function<const HeightDisparityModel*(const std::string&)>& model_for,
    const Image& left_image, const Image& right_image, const AssociationOptions& options = {}) {
    struct Candidate {
        int li, ri;
        double score;
    };
    std::vector<Candidate> candidates;

    std::vector<Image> left_crops(left.size()), right_crops(right.size());
    auto left_crop = [&](int i) -> const Image& {
        if (left_crops[i].empty())
            left_crops[i] = crop_resize_bilinear(left_image, left[i].box, options.crop_size, options.crop_size);
        return left_crops[i];
    };
    auto right_crop = [&](int i) -> const Image& {
        if (right_crops[i].empty())
            right_crops[i] = crop_resize_bilinear(right_image, right[i].box, options.crop_size, options.crop_size);
        return right_crops[i];
    };

    for (int li = 0; li < static_cast<int>(left.size()); ++li) {
        const HeightDisparityModel* model = model_for(left[li].label);
        OCS_REQUIRE(model != nullptr, "no height-disparity model for class '" + left[li].label + "'");
        const double expected = model->expected_disparity(left[li].box.height());
        const double tolerance = std::max(3.0 * model->sigma, options.gate_sigma_floor);
        for (int ri = 0; ri < static_cast<int>(right.size()); ++ri) {
            if (left[li].label != right[ri].label) continue;
            const double center_disparity = left[li].box.center_u() - right[ri].box.center_u();
            if (center_disparity < 0.0) continue;
            if (std::abs(center_disparity - expected) > tolerance) continue;
            candidates.push_back({li, ri, ssim(left_crop(li), right_crop(ri))});
        }
    }

    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.li != b.li) return a.li < b.li;
        return a.ri < b.ri;
    });

    AssociationResult result;
    std::vector<bool> left_used(left.size(), false), right_used(right.size(), false);
    for (const auto& c : candidates) {
        if (left_used[c.li] || right_used[c.ri]) continue;
        left_used[c.li] = true;
        right_used[c.ri] = true;
        result.pairs.push_back({left[c.li], right[c.ri], c.score, c.li, c.ri});
    }
    for (int i = 0; i < static_cast<int>(left.size()); ++i)
        if (!left_used[i]) result.unmatched_left.push_back(i);
    for (int i = 0; i < static_cast<int>(right.size()); ++i)
        if (!right_used[i]) result.unmatched_right.push_back(i);
    return result;
}

/// Single shared model for all classes.
inline AssociationResult associate(const std::vector<Detection2D>& left,
                                   const std::vector<Detection2D>& right,
                                   const HeightDisparityModel& model, const Image& left_image,
                                   const Image& right_image, const AssociationOptions& options = {}) {
    return associate(
        left, right, [&model](const std::string&) { return &model; }, left_image, right_image, options);
}

/// Per-class models; every class appearing in the left detections must be covered.
inline AssociationResult associate(const std::vector<Detection2D>& left,
                                   const std::vector<Detection2D>& right,
                                   const std::map<std::string, HeightDisparityModel>& models,
                                   const Image& left_image, const Image& right_image,
                                   const AssociationOptions& options = {}) {
    return associate(
        left, right,
        [&models](const std::string& label) -> const HeightDisparityModel* {
            auto it = models.find(label);
            return it == models.end() ? nullptr : &it->second;
        },
        left_image, right_image, options);
}

}  // namespace ocstereo
