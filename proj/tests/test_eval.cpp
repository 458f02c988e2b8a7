#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "ocstereo/eval.hpp"

using namespace ocstereo;
using Catch::Matchers::WithinAbs;

namespace {

OrientedBox3D make_box(double cx, double cz, double l, double w, double yaw, double cy = 0.0,
                       double h = 1.5) {
    OrientedBox3D box;
    box.center = {cx, cy, cz};
    box.length = l;
    box.width = w;
    box.height = h;
    box.yaw = yaw;
    return box;
}

// Monte Carlo BEV IoU: sample the union's bounding rectangle and count
// membership via the footprint test (y fixed inside both boxes' span).
double mc_iou_bev(const OrientedBox3D& a, const OrientedBox3D& b, int samples,
                  std::mt19937_64& gen) {
    double min_x = 1e18, max_x = -1e18, min_z = 1e18, max_z = -1e18;
    for (const auto* box : {&a, &b})
        for (const auto& c : box->bev_corners()) {
            min_x = std::min(min_x, c[0]);
            max_x = std::max(max_x, c[0]);
            min_z = std::min(min_z, c[1]);
            max_z = std::max(max_z, c[1]);
        }
    auto footprint = [](const OrientedBox3D& box, double x, double z) {
        const double dx = x - box.center[0];
        const double dz = z - box.center[2];
        const double c = std::cos(box.yaw), s = std::sin(box.yaw);
        const double local_x = dx * c - dz * s;
        const double local_z = dx * s + dz * c;
        return std::abs(local_x) <= 0.5 * box.length && std::abs(local_z) <= 0.5 * box.width;
    };
    std::size_t in_a_or_b = 0, in_both = 0;
    for (int i = 0; i < samples; ++i) {
        const double x = rng::uniform(gen, min_x, max_x);
        const double z = rng::uniform(gen, min_z, max_z);
        const bool ia = footprint(a, x, z);
        const bool ib = footprint(b, x, z);
        if (ia || ib) ++in_a_or_b;
        if (ia && ib) ++in_both;
    }
    return in_a_or_b == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(in_a_or_b);
}

}  // namespace

TEST_CASE("bev iou on axis-aligned boxes has a closed form") {
    // Unit squares offset by half a side: intersection 0.5, union 1.5.
    const auto a = make_box(0.0, 10.0, 1.0, 1.0, 0.0);
    const auto b = make_box(0.5, 10.0, 1.0, 1.0, 0.0);
    REQUIRE_THAT(iou_bev(a, b), WithinAbs(1.0 / 3.0, 1e-9));
    REQUIRE_THAT(iou_bev(a, a), WithinAbs(1.0, 1e-12));
    // Containment: a 2x2 box around a unit box gives 1/4.
    const auto big = make_box(0.0, 10.0, 2.0, 2.0, 0.0);
    REQUIRE_THAT(iou_bev(a, big), WithinAbs(0.25, 1e-9));
    // Disjoint and merely touching boxes share nothing.
    const auto off = make_box(3.0, 10.0, 1.0, 1.0, 0.0);
    REQUIRE(iou_bev(a, off) == 0.0);
    const auto touch = make_box(1.0, 10.0, 1.0, 1.0, 0.0);
    REQUIRE_THAT(iou_bev(a, touch), WithinAbs(0.0, 1e-9));
}

TEST_CASE("bev iou of a square against its 45 degree rotation") {
    // The intersection of a unit square with its quarter-rotated self is the
    // regular octagon of area 2(sqrt(2) - 1).
    const auto a = make_box(0.0, 10.0, 1.0, 1.0, 0.0);
    const auto b = make_box(0.0, 10.0, 1.0, 1.0, std::numbers::pi / 4.0);
    const double inter = 2.0 * (std::numbers::sqrt2 - 1.0);
    const double expected = inter / (2.0 - inter);
    REQUIRE_THAT(iou_bev(a, b), WithinAbs(expected, 1e-9));
}

TEST_CASE("bev iou is symmetric and rigid-motion invariant") {
    std::mt19937_64 gen(51);
    for (int trial = 0; trial < 30; ++trial) {
        auto a = make_box(rng::uniform(gen, -2.0, 2.0), rng::uniform(gen, 8.0, 12.0),
                          rng::uniform(gen, 0.5, 3.0), rng::uniform(gen, 0.5, 3.0),
                          rng::uniform(gen, -3.0, 3.0));
        auto b = make_box(a.center[0] + rng::uniform(gen, -1.0, 1.0),
                          a.center[2] + rng::uniform(gen, -1.0, 1.0), rng::uniform(gen, 0.5, 3.0),
                          rng::uniform(gen, 0.5, 3.0), rng::uniform(gen, -3.0, 3.0));
        const double direct = iou_bev(a, b);
        REQUIRE_THAT(iou_bev(b, a), WithinAbs(direct, 1e-12));

        // Rotate both boxes about the origin and translate them together.
        const double phi = rng::uniform(gen, -3.0, 3.0);
        const double tx = rng::uniform(gen, -5.0, 5.0);
        const double tz = rng::uniform(gen, -5.0, 5.0);
        auto moved = [&](OrientedBox3D box) {
            const double x = box.center[0], z = box.center[2];
            const double c = std::cos(phi), s = std::sin(phi);
            box.center[0] = x * c + z * s + tx;
            box.center[2] = -x * s + z * c + tz;
            box.yaw = std::remainder(box.yaw + phi, 2.0 * std::numbers::pi);
            return box;
        };
        REQUIRE_THAT(iou_bev(moved(a), moved(b)), WithinAbs(direct, 1e-9));
    }
}

TEST_CASE("bev iou agrees with a monte carlo estimate") {
    std::mt19937_64 gen(2024);
    for (int trial = 0; trial < 25; ++trial) {
        const auto a = make_box(rng::uniform(gen, -1.0, 1.0), rng::uniform(gen, 9.0, 11.0),
                                rng::uniform(gen, 0.8, 2.5), rng::uniform(gen, 0.8, 2.5),
                                rng::uniform(gen, -3.14, 3.14));
        const auto b = make_box(a.center[0] + rng::uniform(gen, -0.8, 0.8),
                                a.center[2] + rng::uniform(gen, -0.8, 0.8),
                                rng::uniform(gen, 0.8, 2.5), rng::uniform(gen, 0.8, 2.5),
                                rng::uniform(gen, -3.14, 3.14));
        const double mc = mc_iou_bev(a, b, 200000, gen);
        REQUIRE_THAT(iou_bev(a, b), WithinAbs(mc, 0.02));
    }
}

TEST_CASE("3d iou adds the vertical overlap") {
    // Identical footprints, half-overlapping heights: boxes of height 2
    // offset vertically by 1 intersect over height 1 and unite over 3.
    auto a = make_box(0.0, 10.0, 2.0, 2.0, 0.0, 0.0, 2.0);
    auto b = make_box(0.0, 10.0, 2.0, 2.0, 0.0, 1.0, 2.0);
    REQUIRE_THAT(iou_3d(a, b), WithinAbs(1.0 / 3.0, 1e-9));
    // Aligned heights make the 3D IoU collapse onto the BEV IoU.
    b.center[1] = 0.0;
    b.center[0] = 0.7;
    REQUIRE_THAT(iou_3d(a, b), WithinAbs(iou_bev(a, b), 1e-12));
    // Disjoint vertical spans kill the intersection outright.
    b.center[0] = 0.0;
    b.center[1] = 5.0;
    REQUIRE(iou_3d(a, b) == 0.0);
}

TEST_CASE("difficulty buckets follow box height, occlusion and truncation") {
    GroundTruthObject gt;
    gt.bbox = Box2D{0.0, 0.0, 50.0, 45.0};
    gt.occlusion = 0;
    gt.truncation = 0.0;
    REQUIRE(passes_difficulty(gt, Difficulty::kEasy));
    gt.bbox.y_max = 30.0;  // height 30 < 40
    REQUIRE_FALSE(passes_difficulty(gt, Difficulty::kEasy));
    REQUIRE(passes_difficulty(gt, Difficulty::kModerate));
    gt.occlusion = 2;
    REQUIRE_FALSE(passes_difficulty(gt, Difficulty::kModerate));
    REQUIRE(passes_difficulty(gt, Difficulty::kHard));
    gt.truncation = 0.6;
    REQUIRE_FALSE(passes_difficulty(gt, Difficulty::kHard));
}

namespace {

GroundTruthObject easy_gt(const OrientedBox3D& box, const std::string& label = "Car") {
    GroundTruthObject gt;
    gt.box = box;
    gt.bbox = Box2D{0.0, 0.0, 60.0, 50.0};
    gt.label = label;
    return gt;
}

}  // namespace

TEST_CASE("perfect detections score 100") {
    EvalFrame frame;
    for (double cx : {-3.0, 0.0, 3.0}) {
        const auto box = make_box(cx, 12.0, 3.8, 1.6, 0.3);
        frame.ground_truth.push_back(easy_gt(box));
        frame.detections.push_back({box, 0.9, "Car"});
    }
    const std::vector<EvalFrame> frames{frame};
    ApOptions options;
    options.iou_threshold = 0.7;
    const auto ap = average_precision(frames, options);
    REQUIRE(ap.has_value());
    REQUIRE_THAT(*ap, WithinAbs(100.0, 1e-9));
    // Also exact under the 40-point variant.
    options.forty_point = true;
    REQUIRE_THAT(*average_precision(frames, options), WithinAbs(100.0, 1e-9));
}

TEST_CASE("hand-traced ap of a high-scoring miss and a low-scoring hit") {
    // One object, two detections. The miss outranks the hit, so the PR curve
    // is (r=0, p=0) then (r=1, p=0.5); interpolated precision is 0.5 at every
    // recall point, giving AP = 50 exactly.
    EvalFrame frame;
    const auto gt_box = make_box(0.0, 10.0, 4.0, 2.0, 0.0);
    frame.ground_truth.push_back(easy_gt(gt_box));
    frame.detections.push_back({make_box(20.0, 30.0, 4.0, 2.0, 0.0), 0.95, "Car"});
    frame.detections.push_back({gt_box, 0.60, "Car"});
    const std::vector<EvalFrame> frames{frame};
    const auto ap = average_precision(frames, ApOptions{});
    REQUIRE(ap.has_value());
    REQUIRE_THAT(*ap, WithinAbs(50.0, 1e-9));

    // The 40-point variant interpolates the same curve: precision 0.5 at all
    // 40 sampled recalls.
    ApOptions forty;
    forty.forty_point = true;
    REQUIRE_THAT(*average_precision(frames, forty), WithinAbs(50.0, 1e-9));
}

TEST_CASE("adding a trailing false positive cannot raise ap") {
    EvalFrame frame;
    const auto gt_box = make_box(0.0, 10.0, 4.0, 2.0, 0.0);
    frame.ground_truth.push_back(easy_gt(gt_box));
    frame.detections.push_back({gt_box, 0.9, "Car"});
    std::vector<EvalFrame> frames{frame};
    const double base = *average_precision(frames, ApOptions{});
    frames[0].detections.push_back({make_box(15.0, 25.0, 4.0, 2.0, 0.0), 0.1, "Car"});
    const double with_fp = *average_precision(frames, ApOptions{});
    REQUIRE(with_fp <= base + 1e-12);
}

TEST_CASE("detections on ignored ground truth are absorbed") {
    // A hard-only object (too small for moderate) must neither count as a
    // miss nor turn its detection into a false positive.
    EvalFrame frame;
    const auto main_box = make_box(0.0, 10.0, 4.0, 2.0, 0.0);
    frame.ground_truth.push_back(easy_gt(main_box));
    GroundTruthObject small = easy_gt(make_box(6.0, 30.0, 4.0, 2.0, 0.0));
    small.bbox = Box2D{0.0, 0.0, 12.0, 10.0};  // height 10: ignored at moderate
    frame.ground_truth.push_back(small);
    frame.detections.push_back({main_box, 0.9, "Car"});
    frame.detections.push_back({small.box, 0.8, "Car"});
    const std::vector<EvalFrame> frames{frame};
    const auto ap = average_precision(frames, ApOptions{});
    REQUIRE_THAT(*ap, WithinAbs(100.0, 1e-9));
}

TEST_CASE("class filtering isolates the target label") {
    EvalFrame frame;
    const auto car_box = make_box(0.0, 10.0, 4.0, 2.0, 0.0);
    const auto ped_box = make_box(5.0, 15.0, 0.8, 0.8, 0.0);
    frame.ground_truth.push_back(easy_gt(car_box, "Car"));
    frame.ground_truth.push_back(easy_gt(ped_box, "Pedestrian"));
    frame.detections.push_back({car_box, 0.9, "Car"});
    const std::vector<EvalFrame> frames{frame};
    ApOptions options;
    options.target_label = "Car";
    REQUIRE_THAT(*average_precision(frames, options), WithinAbs(100.0, 1e-9));
    // Without the filter the pedestrian counts as a miss.
    const double merged = *average_precision(frames, ApOptions{});
    REQUIRE(merged < 100.0);
    // A label with no ground truth anywhere has undefined AP.
    ApOptions cyclist;
    cyclist.target_label = "Cyclist";
    REQUIRE_FALSE(average_precision(frames, cyclist).has_value());
}

TEST_CASE("a detection matching an other-label gt is a false positive") {
    EvalFrame frame;
    const auto car_box = make_box(0.0, 10.0, 4.0, 2.0, 0.0);
    const auto ped_box = make_box(5.0, 15.0, 0.8, 0.8, 0.0);
    frame.ground_truth.push_back(easy_gt(car_box, "Car"));
    frame.ground_truth.push_back(easy_gt(ped_box, "Pedestrian"));
    frame.detections.push_back({car_box, 0.9, "Car"});
    frame.detections.push_back({ped_box, 0.95, "Car"});  // right place, wrong class
    const std::vector<EvalFrame> frames{frame};
    ApOptions options;
    options.target_label = "Car";
    // The cross-class hit is a false positive, not an absorbed ignore: it
    // outranks the real hit, capping interpolated precision at 0.5.
    REQUIRE_THAT(*average_precision(frames, options), WithinAbs(50.0, 1e-9));
}

TEST_CASE("empty inputs") {
    const std::vector<EvalFrame> none;
    REQUIRE_FALSE(average_precision(none, ApOptions{}).has_value());
    EvalFrame gt_only;
    gt_only.ground_truth.push_back(easy_gt(make_box(0.0, 10.0, 4.0, 2.0, 0.0)));
    const std::vector<EvalFrame> frames{gt_only};
    REQUIRE_THAT(*average_precision(frames, ApOptions{}), WithinAbs(0.0, 1e-12));
}

namespace {

Detection2D det2d(const Box2D& box, double score) {
    Detection2D d;
    d.box = box;
    d.score = score;
    d.label = "Car";
    return d;
}

}  // namespace

TEST_CASE("stereo ap rewards consistent pairs and punishes swaps") {
    // Two objects far apart in both views.
    StereoEvalFrame frame;
    frame.gt_left = {Box2D{100.0, 50.0, 160.0, 110.0}, Box2D{300.0, 50.0, 360.0, 110.0}};
    frame.gt_right = {Box2D{80.0, 50.0, 140.0, 110.0}, Box2D{290.0, 50.0, 350.0, 110.0}};
    frame.left = {det2d(frame.gt_left[0], 0.9), det2d(frame.gt_left[1], 0.8)};
    frame.right = {det2d(frame.gt_right[0], 0.85), det2d(frame.gt_right[1], 0.95)};

    SECTION("correct pairing scores 100") {
        frame.pairs = {{0, 0}, {1, 1}};
        const std::vector<StereoEvalFrame> frames{frame};
        REQUIRE_THAT(*stereo_ap(frames), WithinAbs(100.0, 1e-9));
    }
    SECTION("swapped pairing yields zero true positives") {
        frame.pairs = {{0, 1}, {1, 0}};
        const std::vector<StereoEvalFrame> frames{frame};
        REQUIRE_THAT(*stereo_ap(frames), WithinAbs(0.0, 1e-12));
    }
    SECTION("unpaired detections are false positives at their own scores") {
        frame.pairs = {{0, 0}};
        const std::vector<StereoEvalFrame> frames{frame};
        const double ap = *stereo_ap(frames);
        // One of two objects found; the stray singles burn precision at
        // scores 0.8 and 0.95, so the single true positive is outranked.
        REQUIRE(ap < 50.0);
        REQUIRE(ap > 0.0);
    }
    SECTION("pair index validation") {
        frame.pairs = {{0, 7}};
        const std::vector<StereoEvalFrame> frames{frame};
        REQUIRE_THROWS_AS(stereo_ap(frames), Error);
    }
}

TEST_CASE("stereo ap without ground truth is undefined") {
    StereoEvalFrame frame;
    frame.left = {det2d(Box2D{0.0, 0.0, 10.0, 10.0}, 0.5)};
    const std::vector<StereoEvalFrame> frames{frame};
    REQUIRE_FALSE(stereo_ap(frames).has_value());
}

TEST_CASE("consistency filter keeps boxes explained by 2d detections") {
    CameraRig rig;
    rig.f_u = rig.f_v = 721.0;
    rig.c_u = 621.0;
    rig.c_v = 187.0;
    rig.baseline_b = 0.54;
    rig.image_width = 1242;
    rig.image_height = 375;

    const auto supported = make_box(0.0, 12.0, 3.8, 1.6, 0.0);
    const auto unsupported = make_box(-6.0, 20.0, 3.8, 1.6, 0.0);
    auto behind = make_box(0.0, -5.0, 3.8, 1.6, 0.0);
    const std::vector<OrientedBox3D> boxes{supported, unsupported, behind};

    const Box2D proj = project_box_to_image(supported, rig);
    const std::vector<Detection2D> detections{det2d(proj, 0.9)};

    const auto kept = consistency_filter(boxes, detections, rig, 0.5);
    REQUIRE(kept.size() == 1);
    REQUIRE_THAT(kept[0].center[2], WithinAbs(12.0, 1e-12));

    // With no detections nothing survives.
    REQUIRE(consistency_filter(boxes, std::vector<Detection2D>{}, rig, 0.5).empty());
}
