#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ocstereo/association.hpp"
#include "ocstereo/camera.hpp"
#include "ocstereo/core.hpp"
#include "ocstereo/io/kitti_io.hpp"
#include "ocstereo/local_disparity.hpp"
#include "ocstereo/resample.hpp"

namespace ocstereo::synth {

// ---------------------------------------------------------------------------
// Band-limited value noise, evaluable at arbitrary real coordinates. The
// right image samples the same continuous texture at fractionally shifted
// positions, so ground-truth disparity is exact with no resampling step.

inline std::uint64_t hash64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class ValueNoise {
public:
    ValueNoise(std::uint64_t seed, double base_scale = 6.0, int octaves = 3)
        : seed_(seed), base_scale_(base_scale), octaves_(octaves) {
        OCS_REQUIRE(base_scale > 0.0 && octaves >= 1, "bad noise parameters");
    }

    /// Sample in [0, 1]; smooth in both coordinates.
    double sample(double x, double y) const {
        double total = 0.0, amp = 1.0, norm = 0.0, freq = 1.0 / base_scale_;
        for (int o = 0; o < octaves_; ++o) {
            total += amp * octave(o, x * freq, y * freq);
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        return total / norm;
    }

private:
    static double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

    double lattice(int octave, std::int64_t ix, std::int64_t iy) const {
        std::uint64_t h = hash64(seed_ ^ (0x517cc1b727220a95ULL * static_cast<std::uint64_t>(octave + 1)));
        h = hash64(h ^ static_cast<std::uint64_t>(ix));
        h = hash64(h ^ static_cast<std::uint64_t>(iy));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    }

    double octave(int o, double x, double y) const {
        const double fx = std::floor(x), fy = std::floor(y);
        const auto ix = static_cast<std::int64_t>(fx);
        const auto iy = static_cast<std::int64_t>(fy);
        const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
        const double v00 = lattice(o, ix, iy), v10 = lattice(o, ix + 1, iy);
        const double v01 = lattice(o, ix, iy + 1), v11 = lattice(o, ix + 1, iy + 1);
        const double a = v00 + (v10 - v00) * tx;
        const double b = v01 + (v11 - v01) * tx;
        return a + (b - a) * ty;
    }

    std::uint64_t seed_;
    double base_scale_;
    int octaves_;
};

// ---------------------------------------------------------------------------
// Scene description: a textured background plane plus fronto-parallel
// billboard objects, all at constant depth, so every ground-truth quantity is
// closed-form.

struct SynthObjectSpec {
    double x = 0.0;  // billboard center, camera frame, meters
    double y = 0.0;
    double z = 10.0;
    double width_m = 1.6;   // billboard extent
    double height_m = 1.5;
    double thickness_m = 0.3;  // depth extent of the 3D box around the plane
    std::string label = "Car";
};

struct SceneConfig {
    double background_depth = 60.0;
    std::vector<SynthObjectSpec> objects;
    double detection_jitter_px = 2.0;  // absolute per-edge perturbation; 0 = exact detections
    int decoys_per_side = 0;           // spurious detections hugging the image edges
    double texture_scale = 6.0;
    int texture_octaves = 3;
    double max_disparity = 191.0;  // generation fails if an object exceeds this
    double min_depth = 4.0;
    double max_depth = 80.0;
};

struct SynthFrame {
    Image left;
    Image right;
    GlobalDisparityMap gt_disparity;   // left frame
    Grid<std::uint8_t> instance_grid;  // left frame; 0 background, k = object k-1
    std::vector<OrientedBox3D> gt_boxes;
    std::vector<std::string> gt_labels;
    std::vector<Box2D> gt_left_boxes;   // exact projections, clipped to the image
    std::vector<Box2D> gt_right_boxes;
    std::vector<io::DetectionRecord> detections_left;   // jittered + decoys
    std::vector<io::DetectionRecord> detections_right;
};

namespace detail {

struct Billboard {
    int index;
    double z;
    double disparity;
    // Exact (unclipped) left-image projection bounds.
    double u0, u1, v0, v1;
    ValueNoise noise;
};

/// Perturbs each box edge independently by up to `px` pixels, keeping at
/// least 0.7 IoU with the exact box (the draw is retried if clipping or the
/// IoU bound fails). Absolute jitter keeps the association residual bounded
/// by a constant number of pixels no matter how large the box is.
inline Box2D jitter_box(const Box2D& exact, double px, std::mt19937_64& gen,
                        double image_w, double image_h) {
    if (px <= 0.0) return exact;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const Box2D candidate = Box2D{exact.x_min + rng::uniform(gen, -px, px),
                                      exact.y_min + rng::uniform(gen, -px, px),
                                      exact.x_max + rng::uniform(gen, -px, px),
                                      exact.y_max + rng::uniform(gen, -px, px)}
                                    .clipped(image_w, image_h);
        if (!candidate.degenerate() && iou_2d(candidate, exact) >= 0.7) return candidate;
    }
    throw Error("could not jitter a detection while keeping 0.7 IoU");
}

}  // namespace detail

/// Renders one deterministic stereo frame with exact ground truth. Objects
/// are painted nearest-wins in both views; the right view samples each
/// surface's continuous texture at the disparity-shifted position.
inline SynthFrame generate(const SceneConfig& config, const CameraRig& rig, std::uint64_t seed) {
    rig.validate();
    OCS_REQUIRE(config.background_depth > 0.0, "background depth must be positive");
    OCS_REQUIRE(config.objects.size() < 255, "too many objects for an 8-bit instance grid");

    const int w = rig.image_width, h = rig.image_height;
    const double d_bg = rig.disparity_from_depth(config.background_depth);

    std::vector<detail::Billboard> boards;
    boards.reserve(config.objects.size());
    for (std::size_t i = 0; i < config.objects.size(); ++i) {
        const SynthObjectSpec& obj = config.objects[i];
        const std::string name = obj.label + " #" + std::to_string(i);
        OCS_REQUIRE(obj.width_m > 0.0 && obj.height_m > 0.0 && obj.thickness_m > 0.0,
                    "object dimensions must be positive: " + name);
        OCS_REQUIRE(obj.z >= config.min_depth && obj.z <= config.max_depth,
                    "object depth outside the supported range: " + name);
        const double d = rig.disparity_from_depth(obj.z);
        OCS_REQUIRE(d <= config.max_disparity,
                    "object disparity exceeds the matcher range: " + name);
        detail::Billboard b{static_cast<int>(i), obj.z, d, 0, 0, 0, 0,
                            ValueNoise(hash64(seed ^ (i + 1)), config.texture_scale,
                                       config.texture_octaves)};
        b.u0 = rig.project(obj.x - 0.5 * obj.width_m, 0.0, obj.z)[0];
        b.u1 = rig.project(obj.x + 0.5 * obj.width_m, 0.0, obj.z)[0];
        b.v0 = rig.project(0.0, obj.y - 0.5 * obj.height_m, obj.z)[1];
        b.v1 = rig.project(0.0, obj.y + 0.5 * obj.height_m, obj.z)[1];

        // The matcher needs texture: reject a surface whose noise field is
        // nearly flat over the projected extent.
        double sum = 0.0, sum_sq = 0.0;
        for (int sy = 0; sy < 16; ++sy)
            for (int sx = 0; sx < 16; ++sx) {
                const double val = b.noise.sample((b.u1 - b.u0) * sx / 15.0, (b.v1 - b.v0) * sy / 15.0);
                sum += val;
                sum_sq += val * val;
            }
        const double var = sum_sq / 256.0 - (sum / 256.0) * (sum / 256.0);
        OCS_REQUIRE(var > 1e-4, "object texture has too little variance to match: " + name);

        boards.push_back(std::move(b));
    }

    // Near-to-far paint order: the first billboard covering a pixel wins.
    std::vector<int> order(boards.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return boards[a].z < boards[b].z; });

    const ValueNoise bg_noise(hash64(seed), config.texture_scale, config.texture_octaves);

    SynthFrame frame;
    frame.left = Image(w, h, 1);
    frame.right = Image(w, h, 1);
    frame.gt_disparity = GlobalDisparityMap(w, h);
    frame.instance_grid = Grid<std::uint8_t>(w, h, 0);

    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            // Left view.
            bool covered = false;
            for (int idx : order) {
                const detail::Billboard& b = boards[idx];
                if (u >= b.u0 && u < b.u1 && v >= b.v0 && v < b.v1) {
                    frame.left.at(u, v) =
                        static_cast<float>(b.noise.sample(u - b.u0, v - b.v0));
                    frame.gt_disparity.set(u, v, b.disparity);
                    frame.instance_grid.at(u, v) = static_cast<std::uint8_t>(b.index + 1);
                    covered = true;
                    break;
                }
            }
            if (!covered) {
                frame.left.at(u, v) = static_cast<float>(bg_noise.sample(u, v));
                frame.gt_disparity.set(u, v, d_bg);
            }
            // Right view: same surfaces, shifted left by their disparity.
            covered = false;
            for (int idx : order) {
                const detail::Billboard& b = boards[idx];
                if (u >= b.u0 - b.disparity && u < b.u1 - b.disparity && v >= b.v0 && v < b.v1) {
                    frame.right.at(u, v) =
                        static_cast<float>(b.noise.sample(u + b.disparity - b.u0, v - b.v0));
                    covered = true;
                    break;
                }
            }
            if (!covered)
                frame.right.at(u, v) = static_cast<float>(bg_noise.sample(u + d_bg, v));
        }
    }

    // Ground-truth boxes and exact projections.
    std::mt19937_64 gen(hash64(seed ^ 0x6a09e667f3bcc909ULL));
    for (std::size_t i = 0; i < config.objects.size(); ++i) {
        const SynthObjectSpec& obj = config.objects[i];
        const detail::Billboard& b = boards[i];
        OrientedBox3D box;
        box.center = {obj.x, obj.y, obj.z};
        box.length = obj.width_m;
        box.width = obj.thickness_m;
        box.height = obj.height_m;
        box.yaw = 0.0;
        frame.gt_boxes.push_back(box);
        frame.gt_labels.push_back(obj.label);

        const Box2D left_exact = Box2D{b.u0, b.v0, b.u1, b.v1}.clipped(w, h);
        const Box2D right_exact =
            Box2D{b.u0 - b.disparity, b.v0, b.u1 - b.disparity, b.v1}.clipped(w, h);
        OCS_REQUIRE(!left_exact.degenerate() && !right_exact.degenerate(),
                    "object projects outside the image: " + obj.label + " #" + std::to_string(i));
        frame.gt_left_boxes.push_back(left_exact);
        frame.gt_right_boxes.push_back(right_exact);

        io::DetectionRecord dl, dr;
        dl.detection.box = detail::jitter_box(left_exact, config.detection_jitter_px, gen, w, h);
        dl.detection.score = rng::uniform(gen, 0.85, 1.0);
        dl.detection.label = obj.label;
        dl.object_id = static_cast<int>(i);
        dr.detection.box = detail::jitter_box(right_exact, config.detection_jitter_px, gen, w, h);
        dr.detection.score = rng::uniform(gen, 0.85, 1.0);
        dr.detection.label = obj.label;
        dr.object_id = static_cast<int>(i);
        frame.detections_left.push_back(std::move(dl));
        frame.detections_right.push_back(std::move(dr));
    }

    // Decoy false positives. Left decoys hug the left edge and right decoys
    // the right edge, so any candidate pairing with a real detection implies
    // a negative center disparity and the association gate drops them.
    if (config.decoys_per_side > 0) {
        double min_right_center = w, max_left_center = 0.0;
        for (const auto& d : frame.detections_right)
            min_right_center = std::min(min_right_center, d.detection.box.center_u());
        for (const auto& d : frame.detections_left)
            max_left_center = std::max(max_left_center, d.detection.box.center_u());
        const double decoy_w = 14.0;
        OCS_REQUIRE(min_right_center > decoy_w && max_left_center < w - decoy_w,
                    "no edge margin left for decoy detections");
        for (int k = 0; k < config.decoys_per_side; ++k) {
            const double hh = rng::uniform(gen, 20.0, 60.0);
            const double cv = rng::uniform(gen, hh, h - hh);
            io::DetectionRecord left_decoy;
            const double lc = rng::uniform(gen, 0.5 * decoy_w, std::min(min_right_center - 1.0, decoy_w));
            left_decoy.detection.box = Box2D{lc - 0.5 * decoy_w, cv - 0.5 * hh,
                                             lc + 0.5 * decoy_w, cv + 0.5 * hh}.clipped(w, h);
            left_decoy.detection.score = rng::uniform(gen, 0.65, 0.85);
            left_decoy.detection.label = config.objects.empty() ? "Car" : config.objects[0].label;
            left_decoy.object_id = -1;
            frame.detections_left.push_back(std::move(left_decoy));

            io::DetectionRecord right_decoy;
            const double rc =
                rng::uniform(gen, std::max(max_left_center + 1.0, w - decoy_w), w - 0.5 * decoy_w);
            right_decoy.detection.box = Box2D{rc - 0.5 * decoy_w, cv - 0.5 * hh,
                                              rc + 0.5 * decoy_w, cv + 0.5 * hh}.clipped(w, h);
            right_decoy.detection.score = rng::uniform(gen, 0.65, 0.85);
            right_decoy.detection.label = left_decoy.detection.label;
            right_decoy.object_id = -1;
            frame.detections_right.push_back(std::move(right_decoy));
        }
    }

    return frame;
}

/// Canonical-resolution mask for one instance, cut from the full-frame
/// instance grid with nearest-neighbor lookup.
inline InstanceMask canonical_mask(const Grid<std::uint8_t>& instance_grid, const Box2D& left_box,
                                   int instance_id, int out_w, int out_h) {
    const Grid<std::uint8_t> crop = nn_crop_resize_grid(instance_grid, left_box, out_w, out_h,
                                                        static_cast<std::uint8_t>(0));
    InstanceMask mask;
    mask.instance_id = instance_id;
    mask.mask = Grid<std::uint8_t>(out_w, out_h, 0);
    for (int j = 0; j < out_h; ++j)
        for (int i = 0; i < out_w; ++i)
            mask.mask.at(i, j) = crop.at(i, j) == instance_id ? 1 : 0;
    return mask;
}

/// Ground-truth point cloud of one instance: masked exact disparity,
/// converted to depth and back-projected.
inline ObjectPointCloud gt_object_cloud(const SynthFrame& frame, const CameraRig& rig,
                                        int object_index) {
    GlobalDisparityMap masked(frame.gt_disparity.width(), frame.gt_disparity.height());
    for (int v = 0; v < masked.height(); ++v)
        for (int u = 0; u < masked.width(); ++u)
            if (frame.instance_grid.at(u, v) == object_index + 1)
                masked.set(u, v, frame.gt_disparity.values.at(u, v));
    return back_project(disparity_to_depth(masked, rig), rig, 0, 0, object_index + 1);
}

}  // namespace ocstereo::synth
