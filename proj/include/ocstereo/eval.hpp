#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocstereo/association.hpp"
#include "ocstereo/camera.hpp"
#include "ocstereo/core.hpp"

namespace ocstereo {

// ---------------------------------------------------------------------------
// Rotated-box IoU via convex polygon clipping.

using Polygon2 = std::vector<std::array<double, 2>>;

inline double polygon_signed_area(const Polygon2& p) {
    double twice = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& a = p[i];
        const auto& b = p[(i + 1) % p.size()];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * twice;
}

namespace detail {

inline Polygon2 counter_clockwise(Polygon2 p) {
    if (polygon_signed_area(p) < 0.0) std::reverse(p.begin(), p.end());
    return p;
}

/// Sutherland–Hodgman clip of a convex subject polygon against a convex CCW
/// clip polygon. Points on a clip edge count as inside, so shared edges
/// survive the clip.
inline Polygon2 clip_convex(const Polygon2& subject_in, const Polygon2& clip_in) {
    constexpr double kEps = 1e-12;
    Polygon2 subject = counter_clockwise(subject_in);
    const Polygon2 clip = counter_clockwise(clip_in);
    for (std::size_t i = 0; i < clip.size() && !subject.empty(); ++i) {
        const auto& a = clip[i];
        const auto& b = clip[(i + 1) % clip.size()];
        auto side = [&](const std::array<double, 2>& p) {
            return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        };
        auto intersect = [&](const std::array<double, 2>& s, const std::array<double, 2>& e) {
            const double ds = side(s), de = side(e);
            const double t = ds / (ds - de);
            return std::array<double, 2>{s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])};
        };
        Polygon2 out;
        out.reserve(subject.size() + 2);
        for (std::size_t j = 0; j < subject.size(); ++j) {
            const auto& s = subject[j];
            const auto& e = subject[(j + 1) % subject.size()];
            const bool s_in = side(s) >= -kEps;
            const bool e_in = side(e) >= -kEps;
            if (s_in) {
                out.push_back(s);
                if (!e_in) out.push_back(intersect(s, e));
            } else if (e_in) {
                out.push_back(intersect(s, e));
            }
        }
        subject = std::move(out);
    }
    return subject;
}

inline Polygon2 bev_polygon(const OrientedBox3D& box) {
    const auto corners = box.bev_corners();
    return Polygon2(corners.begin(), corners.end());
}

inline double bev_intersection_area(const OrientedBox3D& a, const OrientedBox3D& b) {
    const Polygon2 inter = clip_convex(bev_polygon(a), bev_polygon(b));
    if (inter.size() < 3) return 0.0;
    return std::abs(polygon_signed_area(inter));
}

}  // namespace detail

/// IoU of the two ground-plane rectangles.
inline double iou_bev(const OrientedBox3D& a, const OrientedBox3D& b) {
    a.validate();
    b.validate();
    const double inter = detail::bev_intersection_area(a, b);
    const double uni = a.length * a.width + b.length * b.width - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// Volumetric IoU: BEV intersection times vertical overlap, over the volume
/// union.
inline double iou_3d(const OrientedBox3D& a, const OrientedBox3D& b) {
    a.validate();
    b.validate();
    const double y_overlap =
        std::min(a.y_bottom(), b.y_bottom()) - std::max(a.y_top(), b.y_top());
    if (y_overlap <= 0.0) return 0.0;
    const double inter = detail::bev_intersection_area(a, b) * y_overlap;
    const double uni = a.length * a.width * a.height + b.length * b.width * b.height - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

// ---------------------------------------------------------------------------
// Average precision with difficulty buckets.

enum class Difficulty { kEasy, kModerate, kHard };

struct DifficultyThresholds {
    double min_box_height_px;
    int max_occlusion;
    double max_truncation;
};

inline DifficultyThresholds difficulty_thresholds(Difficulty d) {
    switch (d) {
        case Difficulty::kEasy: return {40.0, 0, 0.15};
        case Difficulty::kModerate: return {25.0, 1, 0.30};
        default: return {25.0, 2, 0.50};
    }
}

struct GroundTruthObject {
    OrientedBox3D box;
    Box2D bbox;  // left-image 2D box, used for the difficulty height test
    int occlusion = 0;
    double truncation = 0.0;
    std::string label;
};

inline bool passes_difficulty(const GroundTruthObject& gt, Difficulty d) {
    const DifficultyThresholds t = difficulty_thresholds(d);
    return gt.bbox.height() >= t.min_box_height_px && gt.occlusion <= t.max_occlusion &&
           gt.truncation <= t.max_truncation;
}

struct ScoredBox3D {
    OrientedBox3D box;
    double score = 0.0;
    std::string label;
};

struct EvalFrame {
    std::vector<ScoredBox3D> detections;
    std::vector<GroundTruthObject> ground_truth;
};

enum class IouKind { kBev, k3D };

struct ApOptions {
    double iou_threshold = 0.5;
    Difficulty difficulty = Difficulty::kModerate;
    IouKind kind = IouKind::kBev;
    std::string target_label;  // empty evaluates every label as one class
    bool forty_point = false;  // default is 11-point interpolation
};

namespace detail {

/// Interpolated AP (percent) from per-detection cumulative counts; standard
/// max-precision-to-the-right interpolation sampled at 11 (or 40) recall
/// points.
inline double interpolated_ap(const std::vector<int>& cum_tp, const std::vector<int>& cum_fp,
                              int total_gt, bool forty_point) {
    std::vector<double> recall(cum_tp.size()), precision(cum_tp.size());
    for (std::size_t i = 0; i < cum_tp.size(); ++i) {
        recall[i] = static_cast<double>(cum_tp[i]) / total_gt;
        precision[i] = static_cast<double>(cum_tp[i]) / (cum_tp[i] + cum_fp[i]);
    }
    auto max_precision_at = [&](double r) {
        double best = 0.0;
        for (std::size_t i = 0; i < recall.size(); ++i)
            if (recall[i] >= r - 1e-12) best = std::max(best, precision[i]);
        return best;
    };
    double sum = 0.0;
    if (forty_point) {
        for (int i = 1; i <= 40; ++i) sum += max_precision_at(i / 40.0);
        return 100.0 * sum / 40.0;
    }
    for (int i = 0; i <= 10; ++i) sum += max_precision_at(i / 10.0);
    return 100.0 * sum / 11.0;
}

}  // namespace detail

/// Score-ordered greedy AP over rotated-box IoU. Ground truth of the target
/// label that fails the difficulty bucket is ignored rather than required:
/// detections landing on it are dropped from the precision count instead of
/// becoming false positives. Returns nothing when the bucket holds no ground
/// truth.
inline std::optional<double> average_precision(std::span<const EvalFrame> frames,
                                               const ApOptions& options = {}) {
    OCS_REQUIRE(options.iou_threshold > 0.0 && options.iou_threshold <= 1.0,
                "IoU threshold must lie in (0, 1]");
    auto label_matches = [&](const std::string& label) {
        return options.target_label.empty() || label == options.target_label;
    };
    auto iou = [&](const OrientedBox3D& a, const OrientedBox3D& b) {
        return options.kind == IouKind::kBev ? iou_bev(a, b) : iou_3d(a, b);
    };

    int total_gt = 0;
    std::vector<std::vector<int>> gt_state(frames.size());  // 0 relevant, 1 ignored, 2 other label
    for (std::size_t f = 0; f < frames.size(); ++f) {
        gt_state[f].resize(frames[f].ground_truth.size(), 2);
        for (std::size_t g = 0; g < frames[f].ground_truth.size(); ++g) {
            const GroundTruthObject& gt = frames[f].ground_truth[g];
            if (!label_matches(gt.label)) continue;
            gt_state[f][g] = passes_difficulty(gt, options.difficulty) ? 0 : 1;
            if (gt_state[f][g] == 0) ++total_gt;
        }
    }
    if (total_gt == 0) return std::nullopt;

    struct Entry {
        double score;
        std::size_t frame;
        std::size_t det;
    };
    std::vector<Entry> entries;
    for (std::size_t f = 0; f < frames.size(); ++f)
        for (std::size_t d = 0; d < frames[f].detections.size(); ++d)
            if (label_matches(frames[f].detections[d].label))
                entries.push_back({frames[f].detections[d].score, f, d});
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.score > b.score; });

    std::vector<std::vector<std::uint8_t>> taken(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f)
        taken[f].assign(frames[f].ground_truth.size(), 0);

    std::vector<int> cum_tp, cum_fp;
    int tp = 0, fp = 0;
    for (const Entry& e : entries) {
        const EvalFrame& frame = frames[e.frame];
        const OrientedBox3D& det_box = frame.detections[e.det].box;
        int best_gt = -1;
        double best_iou = options.iou_threshold;
        int best_ignored = -1;
        double best_ignored_iou = options.iou_threshold;
        for (std::size_t g = 0; g < frame.ground_truth.size(); ++g) {
            if (taken[e.frame][g] || gt_state[e.frame][g] == 2) continue;
            const double v = iou(det_box, frame.ground_truth[g].box);
            if (gt_state[e.frame][g] == 0 && v >= best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(g);
            } else if (gt_state[e.frame][g] == 1 && v >= best_ignored_iou) {
                best_ignored_iou = v;
                best_ignored = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            taken[e.frame][best_gt] = 1;
            ++tp;
        } else if (best_ignored >= 0) {
            taken[e.frame][best_ignored] = 1;
            continue;  // absorbed by an out-of-bucket object: not a false positive
        } else {
            ++fp;
        }
        cum_tp.push_back(tp);
        cum_fp.push_back(fp);
    }
    if (cum_tp.empty()) return 0.0;
    return detail::interpolated_ap(cum_tp, cum_fp, total_gt, options.forty_point);
}

// ---------------------------------------------------------------------------
// Stereo 2D AP: both boxes of a pair must clear the IoU threshold against the
// same object's left and right ground-truth boxes.

struct StereoEvalFrame {
    std::vector<Detection2D> left;
    std::vector<Detection2D> right;
    std::vector<std::array<int, 2>> pairs;  // (left index, right index)
    std::vector<Box2D> gt_left;             // index = object id
    std::vector<Box2D> gt_right;            // same length as gt_left
};

struct StereoApOptions {
    double iou_threshold = 0.7;
    bool forty_point = false;
};

/// AP over associated detection pairs. A pair scores min(left, right) and is
/// a true positive only when both sides reach the threshold against the same
/// object. Detections left out of every pair still count as false positives,
/// entering at their own scores.
inline std::optional<double> stereo_ap(std::span<const StereoEvalFrame> frames,
                                       const StereoApOptions& options = {}) {
    int total_gt = 0;
    for (const StereoEvalFrame& f : frames) {
        OCS_REQUIRE(f.gt_left.size() == f.gt_right.size(),
                    "ground truth must pair left and right boxes by object");
        total_gt += static_cast<int>(f.gt_left.size());
    }
    if (total_gt == 0) return std::nullopt;

    struct Entry {
        double score;
        std::size_t frame;
        int pair;  // index into pairs, or -1 for an unpaired single
        int left;
        int right;
    };
    std::vector<Entry> entries;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const StereoEvalFrame& frame = frames[f];
        std::vector<std::uint8_t> left_used(frame.left.size(), 0), right_used(frame.right.size(), 0);
        for (std::size_t p = 0; p < frame.pairs.size(); ++p) {
            const int li = frame.pairs[p][0], ri = frame.pairs[p][1];
            OCS_REQUIRE(li >= 0 && li < static_cast<int>(frame.left.size()) && ri >= 0 &&
                            ri < static_cast<int>(frame.right.size()),
                        "pair indexes a missing detection");
            left_used[li] = 1;
            right_used[ri] = 1;
            entries.push_back({std::min(frame.left[li].score, frame.right[ri].score), f,
                               static_cast<int>(p), li, ri});
        }
        for (std::size_t i = 0; i < frame.left.size(); ++i)
            if (!left_used[i]) entries.push_back({frame.left[i].score, f, -1, static_cast<int>(i), -1});
        for (std::size_t i = 0; i < frame.right.size(); ++i)
            if (!right_used[i]) entries.push_back({frame.right[i].score, f, -1, -1, static_cast<int>(i)});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.score > b.score; });

    std::vector<std::vector<std::uint8_t>> taken(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) taken[f].assign(frames[f].gt_left.size(), 0);

    std::vector<int> cum_tp, cum_fp;
    int tp = 0, fp = 0;
    for (const Entry& e : entries) {
        bool matched = false;
        if (e.pair >= 0) {
            const StereoEvalFrame& frame = frames[e.frame];
            int best = -1;
            double best_min_iou = options.iou_threshold;
            for (std::size_t g = 0; g < frame.gt_left.size(); ++g) {
                if (taken[e.frame][g]) continue;
                const double both = std::min(iou_2d(frame.left[e.left].box, frame.gt_left[g]),
                                             iou_2d(frame.right[e.right].box, frame.gt_right[g]));
                if (both >= best_min_iou) {
                    best_min_iou = both;
                    best = static_cast<int>(g);
                }
            }
            if (best >= 0) {
                taken[e.frame][best] = 1;
                matched = true;
            }
        }
        matched ? ++tp : ++fp;
        cum_tp.push_back(tp);
        cum_fp.push_back(fp);
    }
    if (cum_tp.empty()) return 0.0;
    return detail::interpolated_ap(cum_tp, cum_fp, total_gt, options.forty_point);
}

// ---------------------------------------------------------------------------
// 2D–3D consistency filter.

/// Keeps a 3D box only when its image projection overlaps some 2D detection
/// by at least `min_iou`. Boxes that cannot be projected (any corner at or
/// behind the camera) are removed.
inline std::vector<OrientedBox3D> consistency_filter(std::span<const OrientedBox3D> boxes,
                                                     std::span<const Detection2D> detections,
                                                     const CameraRig& rig, double min_iou = 0.5) {
    rig.validate();
    std::vector<OrientedBox3D> kept;
    for (const OrientedBox3D& box : boxes) {
        if (!box_in_front_of_camera(box)) continue;
        const Box2D projected = project_box_to_image(box, rig);
        if (projected.degenerate()) continue;
        double best = 0.0;
        for (const Detection2D& det : detections) best = std::max(best, iou_2d(projected, det.box));
        if (best >= min_iou) kept.push_back(box);
    }
    return kept;
}

}  // namespace ocstereo
