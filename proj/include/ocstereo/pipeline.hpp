#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ocstereo/association.hpp"
#include "ocstereo/camera.hpp"
#include "ocstereo/core.hpp"
#include "ocstereo/eval.hpp"
#include "ocstereo/io/kitti_io.hpp"
#include "ocstereo/io/ply_io.hpp"
#include "ocstereo/io/png_io.hpp"
#include "ocstereo/io/text.hpp"
#include "ocstereo/local_disparity.hpp"
#include "ocstereo/matching.hpp"
#include "ocstereo/metrics.hpp"
#include "ocstereo/synth.hpp"

namespace ocstereo::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Parallelism. OCSTEREO_THREADS caps whatever was requested.

inline int thread_budget(int requested = 0) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("OCSTEREO_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0) n = std::min<long>(n, cap);
    }
    return n;
}

/// Runs fn(0..n-1) on a bounded worker pool. The first exception is rethrown
/// after all workers drain.
template <typename Fn>
inline void parallel_for(int n, int threads, Fn&& fn) {
    threads = std::min(threads, n);
    if (n <= 0) return;
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Dataset layout (KITTI-style directory names).

inline std::string frame_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    return buf;
}

struct DatasetLayout {
    fs::path root;

    fs::path calib(const std::string& id) const { return root / "calib" / (id + ".txt"); }
    fs::path left_image(const std::string& id) const { return root / "image_2" / (id + ".png"); }
    fs::path right_image(const std::string& id) const { return root / "image_3" / (id + ".png"); }
    fs::path labels(const std::string& id) const { return root / "label_2" / (id + ".txt"); }
    fs::path right_boxes(const std::string& id) const { return root / "boxes_right" / (id + ".csv"); }
    fs::path detections_left(const std::string& id) const {
        return root / "detections_left" / (id + ".csv");
    }
    fs::path detections_right(const std::string& id) const {
        return root / "detections_right" / (id + ".csv");
    }
    fs::path gt_disparity(const std::string& id) const { return root / "disparity" / (id + ".png"); }
    fs::path masks(const std::string& id) const { return root / "masks" / (id + ".png"); }

    std::vector<std::string> frame_ids() const {
        OCS_REQUIRE(fs::is_directory(root / "image_2"),
                    "dataset has no image_2 directory: " + root.string());
        std::vector<std::string> ids;
        for (const auto& entry : fs::directory_iterator(root / "image_2"))
            if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
        std::sort(ids.begin(), ids.end());
        return ids;
    }
};

// ---------------------------------------------------------------------------
// Synthetic dataset generation.

struct SynthDatasetConfig {
    CameraRig rig{721.0, 721.0, 621.0, 187.0, 0.54, 1242, 375};
    int frames = 10;
    std::uint64_t seed = 1;
    synth::SceneConfig scene;  // objects used verbatim when randomize is false
    bool randomize = true;
    int min_objects = 1;
    int max_objects = 8;
    double min_z = 12.0;
    double max_z = 40.0;
};

/// Random frame population: each object gets its own horizontal strip of the
/// image, so boxes never overlap and ground truth stays unambiguous. The
/// strips start past the largest possible disparity so the right-view
/// projections stay inside the frame too. Physical height is fixed (cars are
/// all about the same height); width varies.
inline std::vector<synth::SynthObjectSpec> random_objects(const SynthDatasetConfig& config,
                                                          std::mt19937_64& gen) {
    const CameraRig& rig = config.rig;
    const int count = rng::uniform_int(gen, config.min_objects, config.max_objects);
    const int strips = config.max_objects;
    std::vector<int> strip_ids(strips);
    std::iota(strip_ids.begin(), strip_ids.end(), 0);
    for (int i = strips - 1; i > 0; --i)
        std::swap(strip_ids[i], strip_ids[rng::uniform_int(gen, 0, i)]);

    std::vector<synth::SynthObjectSpec> objects;
    const double x_offset = rig.disparity_from_depth(config.min_z) + 2.0;
    const double strip_w = (rig.image_width - x_offset) / strips;
    for (int k = 0; k < count; ++k) {
        synth::SynthObjectSpec obj;
        obj.z = rng::uniform(gen, config.min_z, config.max_z);
        obj.height_m = 1.5;
        obj.width_m = rng::uniform(gen, 1.4, 2.0);
        obj.thickness_m = 0.3;
        // Keep the billboard inside its strip with a safety margin.
        const double w_px = rig.f_u * obj.width_m / obj.z;
        OCS_REQUIRE(strip_w >= w_px + 4.0,
                    "strip layout cannot fit the widest object; raise min_z or lower max_objects");
        const double strip_center = x_offset + (strip_ids[k] + 0.5) * strip_w;
        const double slack = std::max(0.0, 0.5 * (strip_w - w_px) - 2.0);
        const double cu = strip_center + rng::uniform(gen, -slack, slack);
        obj.x = (cu - rig.c_u) * obj.z / rig.f_u;
        obj.y = rng::uniform(gen, -0.2, 0.6);
        objects.push_back(obj);
    }
    return objects;
}

/// Writes a complete synthetic dataset in the layout the pipeline consumes.
inline void write_dataset(const DatasetLayout& layout, const SynthDatasetConfig& config) {
    config.rig.validate();
    OCS_REQUIRE(config.frames >= 1, "dataset needs at least one frame");
    for (const char* dir : {"calib", "image_2", "image_3", "label_2", "boxes_right",
                            "detections_left", "detections_right", "disparity", "masks"})
        fs::create_directories(layout.root / dir);

    for (int f = 0; f < config.frames; ++f) {
        const std::string id = frame_name(f);
        synth::SceneConfig scene = config.scene;
        if (config.randomize) {
            std::mt19937_64 gen(synth::hash64(config.seed ^ (0x9e3779b97f4a7c15ULL * (f + 1))));
            scene.objects = random_objects(config, gen);
        }
        const synth::SynthFrame frame = synth::generate(scene, config.rig, config.seed + f);

        {
            std::ofstream out(layout.calib(id));
            out << format_kitti_calib(config.rig);
        }
        io::write_image_png(layout.left_image(id).string(), frame.left);
        io::write_image_png(layout.right_image(id).string(), frame.right);
        {
            std::ofstream out(layout.labels(id));
            for (std::size_t i = 0; i < frame.gt_boxes.size(); ++i)
                out << io::format_kitti_label(io::label_from_box(
                    frame.gt_boxes[i], frame.gt_labels[i], frame.gt_left_boxes[i]));
        }
        {
            std::vector<io::DetectionRecord> right_records;
            for (std::size_t i = 0; i < frame.gt_right_boxes.size(); ++i) {
                io::DetectionRecord r;
                r.detection.box = frame.gt_right_boxes[i];
                r.detection.score = 1.0;
                r.detection.label = frame.gt_labels[i];
                r.object_id = static_cast<int>(i);
                right_records.push_back(std::move(r));
            }
            std::ofstream out(layout.right_boxes(id));
            out << io::format_detections_csv(right_records);
        }
        {
            std::ofstream out(layout.detections_left(id));
            out << io::format_detections_csv(frame.detections_left);
        }
        {
            std::ofstream out(layout.detections_right(id));
            out << io::format_detections_csv(frame.detections_right);
        }
        io::write_disparity_png(layout.gt_disparity(id).string(), frame.gt_disparity);
        io::write_mask_png(layout.masks(id).string(), frame.instance_grid);
    }
}

// ---------------------------------------------------------------------------
// Frame loading.

struct FrameData {
    std::string id;
    CameraRig rig;
    Image left;
    Image right;
    std::vector<io::DetectionRecord> det_left;
    std::vector<io::DetectionRecord> det_right;
    std::vector<io::KittiLabel> labels;            // empty when absent
    std::vector<io::DetectionRecord> right_boxes;  // gt right projections
    std::optional<GlobalDisparityMap> gt_disparity;
    std::optional<Grid<std::uint8_t>> instance_grid;
};

/// Loads one frame. A missing calib or image file throws Error mentioning the
/// frame (the caller records it and moves on); malformed content also throws,
/// which the caller treats as fatal.
inline FrameData load_frame(const DatasetLayout& layout, const std::string& id) {
    FrameData frame;
    frame.id = id;
    OCS_REQUIRE(fs::exists(layout.calib(id)), "missing calib for frame " + id);
    OCS_REQUIRE(fs::exists(layout.left_image(id)) && fs::exists(layout.right_image(id)),
                "missing stereo images for frame " + id);
    frame.left = io::read_image_png(layout.left_image(id).string());
    frame.right = io::read_image_png(layout.right_image(id).string());
    {
        std::ifstream in(layout.calib(id));
        frame.rig = parse_kitti_calib(in, frame.left.width(), frame.left.height());
    }
    if (fs::exists(layout.detections_left(id))) {
        std::ifstream in(layout.detections_left(id));
        frame.det_left = io::parse_detections_csv(in);
    }
    if (fs::exists(layout.detections_right(id))) {
        std::ifstream in(layout.detections_right(id));
        frame.det_right = io::parse_detections_csv(in);
    }
    if (fs::exists(layout.labels(id))) {
        std::ifstream in(layout.labels(id));
        frame.labels = io::parse_kitti_labels(in);
    }
    if (fs::exists(layout.right_boxes(id))) {
        std::ifstream in(layout.right_boxes(id));
        frame.right_boxes = io::parse_detections_csv(in);
    }
    if (fs::exists(layout.gt_disparity(id)))
        frame.gt_disparity = io::read_disparity_png(layout.gt_disparity(id).string());
    if (fs::exists(layout.masks(id)))
        frame.instance_grid = io::read_mask_png(layout.masks(id).string());

    // No detection files: fall back to the annotations, like running on
    // ground-truth boxes. A present-but-empty file means the detector found
    // nothing and is honored as-is.
    if (!fs::exists(layout.detections_left(id)) && !frame.labels.empty()) {
        for (std::size_t i = 0; i < frame.labels.size(); ++i) {
            io::DetectionRecord r;
            r.detection.box = frame.labels[i].bbox;
            r.detection.score = 1.0;
            r.detection.label = frame.labels[i].type;
            r.object_id = static_cast<int>(i);
            frame.det_left.push_back(std::move(r));
        }
    }
    if (!fs::exists(layout.detections_right(id))) frame.det_right = frame.right_boxes;
    return frame;
}

/// Height → disparity samples from dataset annotations (left label boxes
/// paired with the stored right projections by object id), fitted per class.
inline std::map<std::string, HeightDisparityModel> fit_models(const DatasetLayout& layout,
                                                              const std::vector<std::string>& ids) {
    std::map<std::string, std::vector<HeightDisparitySample>> samples;
    for (const std::string& id : ids) {
        if (!fs::exists(layout.labels(id)) || !fs::exists(layout.right_boxes(id))) continue;
        std::ifstream label_in(layout.labels(id));
        const auto labels = io::parse_kitti_labels(label_in);
        std::ifstream right_in(layout.right_boxes(id));
        const auto right = io::parse_detections_csv(right_in);
        for (const io::DetectionRecord& r : right) {
            if (r.object_id < 0 || r.object_id >= static_cast<int>(labels.size())) continue;
            const io::KittiLabel& l = labels[r.object_id];
            samples[l.type].push_back(
                {l.bbox.height(), l.bbox.center_u() - r.detection.box.center_u()});
        }
    }
    std::map<std::string, HeightDisparityModel> models;
    for (auto& [label, s] : samples)
        if (s.size() >= 2) models[label] = fit_height_disparity(s);
    OCS_REQUIRE(!models.empty(), "no class had enough annotation pairs to fit a disparity model");
    return models;
}

// ---------------------------------------------------------------------------
// Pipeline run.

struct PipelineConfig {
    AssociationOptions association;
    MatcherOptions matcher;
    double streak_margin = 0.3;
    bool ascii_ply = false;
    bool dry_run = false;
    int threads = 0;  // 0 = hardware concurrency (still capped by OCSTEREO_THREADS)
};

struct FrameResult {
    std::string id;
    std::string status = "ok";  // or the per-frame error message
    int left_detections = 0;
    int right_detections = 0;
    int pairs = 0;
    int true_pairs = 0;    // pairs whose two object ids agree (ids available)
    int wrong_pairs = 0;   // mismatched or decoy-involving pairs
    int gt_objects = 0;
    double association_ms = 0.0;
    double matching_ms = 0.0;
    std::optional<double> depth_rmse_m;
    std::optional<double> mean_streak_index;
    std::optional<double> mean_cloud_loss;
};

struct PipelineReport {
    std::vector<FrameResult> frames;
    int frames_ok = 0;
    int frames_failed = 0;
    long total_pairs = 0;
    long total_true_pairs = 0;
    long total_gt_objects = 0;
    double association_accuracy = 0.0;  // true pairs / gt objects with both boxes
    double mean_depth_rmse_m = 0.0;
    double mean_streak_index = 0.0;
    double mean_association_ms = 0.0;
    double mean_matching_ms = 0.0;
};

namespace detail {

/// Majority instance id inside the canonical crop of the instance grid
/// (0 = background loses to any instance). Returns 0 when the crop holds no
/// instance pixels.
inline int dominant_instance(const Grid<std::uint8_t>& instance_grid, const Box2D& box, int w,
                             int h) {
    const Grid<std::uint8_t> crop = nn_crop_resize_grid(instance_grid, box, w, h,
                                                        static_cast<std::uint8_t>(0));
    std::array<int, 256> histogram{};
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) ++histogram[crop.at(i, j)];
    int best = 0, best_count = 0;
    for (int id = 1; id < 256; ++id)
        if (histogram[id] > best_count) {
            best = id;
            best_count = histogram[id];
        }
    return best;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

}  // namespace detail

/// Object-centric processing of one loaded frame: threshold detections,
/// associate, match every pair, composite, and compare against ground truth
/// where the dataset provides it. Writes per-object and merged PLY plus the
/// composited disparity map unless out_dir is empty.
inline FrameResult process_frame(const FrameData& frame,
                                 const std::map<std::string, HeightDisparityModel>& models,
                                 const PipelineConfig& config, const fs::path& out_dir) {
    FrameResult result;
    result.id = frame.id;
    result.gt_objects = static_cast<int>(frame.labels.size());

    std::vector<Detection2D> left, right;
    std::vector<int> left_ids, right_ids;
    for (const io::DetectionRecord& r : frame.det_left)
        if (r.detection.score >= config.association.score_threshold) {
            left.push_back(r.detection);
            left_ids.push_back(r.object_id);
        }
    for (const io::DetectionRecord& r : frame.det_right)
        if (r.detection.score >= config.association.score_threshold) {
            right.push_back(r.detection);
            right_ids.push_back(r.object_id);
        }
    result.left_detections = static_cast<int>(left.size());
    result.right_detections = static_cast<int>(right.size());

    const auto assoc_start = std::chrono::steady_clock::now();
    const AssociationResult assoc =
        associate(left, right, models, frame.left, frame.right, config.association);
    result.association_ms = detail::elapsed_ms(assoc_start);
    result.pairs = static_cast<int>(assoc.pairs.size());
    for (const RoiPair& pair : assoc.pairs) {
        const int li = left_ids[pair.left_index], ri = right_ids[pair.right_index];
        if (li >= 0 && li == ri)
            ++result.true_pairs;
        else
            ++result.wrong_pairs;
    }

    const int cw = config.matcher.canonical_width, ch = config.matcher.canonical_height;
    const auto match_start = std::chrono::steady_clock::now();

    std::vector<CompositeInput> composite_inputs;
    std::vector<ObjectPointCloud> clouds;
    std::vector<int> cloud_instance;  // instance grid id per matched pair (0 = no grid)
    for (const RoiPair& pair : assoc.pairs) {
        InstanceMask mask;
        int instance = 0;
        if (frame.instance_grid) {
            instance = detail::dominant_instance(*frame.instance_grid, pair.left.box, cw, ch);
            if (instance == 0) continue;  // detection over pure background
            mask = synth::canonical_mask(*frame.instance_grid, pair.left.box, instance, cw, ch);
        } else {
            mask.instance_id = pair.left_index + 1;
            mask.mask = Grid<std::uint8_t>(cw, ch, 1);
        }
        MatchResult matched = match_pair(pair.left.box, pair.right.box, frame.left, frame.right,
                                         mask, frame.rig, config.matcher);
        cloud_instance.push_back(instance);
        clouds.push_back(std::move(matched.cloud));
        composite_inputs.push_back({std::move(matched.local), std::move(mask)});
    }
    const GlobalDisparityMap composited =
        composite(composite_inputs, frame.rig, frame.left.width(), frame.left.height());
    result.matching_ms = detail::elapsed_ms(match_start);

    // Ground-truth comparisons.
    if (frame.gt_disparity && frame.instance_grid) {
        const DepthMap predicted_depth = disparity_to_depth(composited, frame.rig);
        const DepthMap gt_depth = disparity_to_depth(*frame.gt_disparity, frame.rig);
        bool any_joint = false;
        for (int v = 0; v < predicted_depth.height() && !any_joint; ++v)
            for (int u = 0; u < predicted_depth.width(); ++u)
                if (predicted_depth.is_valid(u, v) && gt_depth.is_valid(u, v)) {
                    any_joint = true;
                    break;
                }
        if (any_joint) result.depth_rmse_m = depth_rmse(predicted_depth, gt_depth);

        double streak_sum = 0.0, loss_sum = 0.0;
        int streak_n = 0, loss_n = 0;
        for (std::size_t p = 0; p < clouds.size(); ++p) {
            const int instance = cloud_instance[p];
            if (instance <= 0 || clouds[p].empty()) continue;
            const int object_index = instance - 1;
            if (object_index >= static_cast<int>(frame.labels.size())) continue;
            const OrientedBox3D gt_box = io::box_from_label(frame.labels[object_index]);
            streak_sum += streaking_index(clouds[p], gt_box, config.streak_margin);
            ++streak_n;
            GlobalDisparityMap masked(frame.gt_disparity->width(), frame.gt_disparity->height());
            for (int v = 0; v < masked.height(); ++v)
                for (int u = 0; u < masked.width(); ++u)
                    if (frame.instance_grid->at(u, v) == instance &&
                        frame.gt_disparity->is_valid(u, v))
                        masked.set(u, v, frame.gt_disparity->values.at(u, v));
            const ObjectPointCloud gt_cloud =
                back_project(disparity_to_depth(masked, frame.rig), frame.rig, 0, 0, instance);
            if (!gt_cloud.empty()) {
                loss_sum += point_cloud_loss(clouds[p], gt_cloud);
                ++loss_n;
            }
        }
        if (streak_n > 0) result.mean_streak_index = streak_sum / streak_n;
        if (loss_n > 0) result.mean_cloud_loss = loss_sum / loss_n;
    }

    if (!out_dir.empty()) {
        for (std::size_t p = 0; p < clouds.size(); ++p)
            if (!clouds[p].empty())
                io::write_ply(
                    (out_dir / "clouds" / (frame.id + "_obj" + std::to_string(p) + ".ply")).string(),
                    clouds[p], config.ascii_ply);
        io::write_ply((out_dir / "clouds" / (frame.id + ".ply")).string(),
                      std::span<const ObjectPointCloud>(clouds), config.ascii_ply);
        // Mismatches can reconstruct to a negative disparity, which the PNG
        // encoding cannot hold; store those cells as missing.
        GlobalDisparityMap printable = composited;
        for (int v = 0; v < printable.height(); ++v)
            for (int u = 0; u < printable.width(); ++u)
                if (printable.is_valid(u, v) && printable.values.at(u, v) < 0.0)
                    printable.invalidate(u, v);
        io::write_disparity_png((out_dir / "disparity" / (frame.id + ".png")).string(), printable);
    }
    return result;
}

inline std::string csv_safe(std::string text) {
    for (char& c : text)
        if (c == ',' || c == '\n') c = ';';
    return text;
}

/// Everything in this CSV is a pure function of the dataset and config, so
/// runs with different thread counts produce byte-identical files. Timings
/// live in their own CSV because they never reproduce.
inline std::string metrics_csv(const PipelineReport& report) {
    std::string out =
        "frame,status,left_detections,right_detections,pairs,true_pairs,wrong_pairs,gt_objects,"
        "depth_rmse_m,mean_streak_index,mean_cloud_loss\n";
    auto opt = [](const std::optional<double>& v) { return v ? io::fmt_double(*v) : std::string(); };
    for (const FrameResult& f : report.frames) {
        out += f.id + ',' + csv_safe(f.status) + ',' + std::to_string(f.left_detections) + ',' +
               std::to_string(f.right_detections) + ',' + std::to_string(f.pairs) + ',' +
               std::to_string(f.true_pairs) + ',' + std::to_string(f.wrong_pairs) + ',' +
               std::to_string(f.gt_objects) + ',' + opt(f.depth_rmse_m) + ',' +
               opt(f.mean_streak_index) + ',' + opt(f.mean_cloud_loss) + '\n';
    }
    return out;
}

inline std::string timings_csv(const PipelineReport& report) {
    std::string out = "frame,association_ms,matching_ms\n";
    for (const FrameResult& f : report.frames)
        out += f.id + ',' + io::fmt_double(f.association_ms, 4) + ',' +
               io::fmt_double(f.matching_ms, 4) + '\n';
    return out;
}

inline json report_json(const PipelineReport& report) {
    json j;
    j["frames_ok"] = report.frames_ok;
    j["frames_failed"] = report.frames_failed;
    j["total_pairs"] = report.total_pairs;
    j["total_true_pairs"] = report.total_true_pairs;
    j["total_gt_objects"] = report.total_gt_objects;
    j["association_accuracy"] = report.association_accuracy;
    j["mean_depth_rmse_m"] = report.mean_depth_rmse_m;
    j["mean_streak_index"] = report.mean_streak_index;
    j["mean_association_ms"] = report.mean_association_ms;
    j["mean_matching_ms"] = report.mean_matching_ms;
    return j;
}

inline json effective_config_json(const PipelineConfig& config) {
    json j;
    j["association"]["score_threshold"] = config.association.score_threshold;
    j["association"]["crop_size"] = config.association.crop_size;
    j["association"]["gate_sigma_floor"] = config.association.gate_sigma_floor;
    j["matcher"]["d_local_min"] = config.matcher.d_local_min;
    j["matcher"]["d_local_max"] = config.matcher.d_local_max;
    j["matcher"]["canonical_width"] = config.matcher.canonical_width;
    j["matcher"]["canonical_height"] = config.matcher.canonical_height;
    j["matcher"]["census_width"] = config.matcher.census_width;
    j["matcher"]["census_height"] = config.matcher.census_height;
    j["matcher"]["box_filter_radius"] = config.matcher.box_filter_radius;
    j["matcher"]["sgm_p1"] = config.matcher.sgm_p1;
    j["matcher"]["sgm_p2"] = config.matcher.sgm_p2;
    j["matcher"]["temperature"] = config.matcher.temperature;
    j["matcher"]["confidence_min"] = config.matcher.confidence_min;
    j["matcher"]["lr_max_diff"] = config.matcher.lr_max_diff;
    j["streak_margin"] = config.streak_margin;
    j["ascii_ply"] = config.ascii_ply;
    j["dry_run"] = config.dry_run;
    j["threads"] = config.threads;
    return j;
}

/// End-to-end run over a dataset directory. Frames are processed in parallel
/// but reduced and written in frame order, so outputs are identical for any
/// thread count. Per-frame failures (missing files) are recorded and the run
/// continues; malformed content aborts.
inline PipelineReport run_pipeline(const fs::path& dataset_dir, const fs::path& out_dir,
                                   const PipelineConfig& config) {
    const DatasetLayout layout{dataset_dir};
    const std::vector<std::string> ids = layout.frame_ids();
    OCS_REQUIRE(!ids.empty(), "dataset holds no frames: " + dataset_dir.string());
    const auto models = fit_models(layout, ids);

    PipelineReport report;
    report.frames.resize(ids.size());
    if (config.dry_run) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            FrameResult& f = report.frames[i];
            f.id = ids[i];
            if (!fs::exists(layout.calib(ids[i])))
                f.status = "missing calib for frame " + ids[i];
            else if (!fs::exists(layout.left_image(ids[i])) ||
                     !fs::exists(layout.right_image(ids[i])))
                f.status = "missing stereo images for frame " + ids[i];
            if (f.status == "ok")
                ++report.frames_ok;
            else
                ++report.frames_failed;
        }
        return report;
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir / "clouds");
        fs::create_directories(out_dir / "disparity");
    }
    parallel_for(static_cast<int>(ids.size()), thread_budget(config.threads), [&](int i) {
        try {
            const FrameData frame = load_frame(layout, ids[i]);
            report.frames[i] = process_frame(frame, models, config, out_dir);
        } catch (const Error& e) {
            const std::string message = e.what();
            if (message.rfind("missing", 0) == 0) {
                report.frames[i].id = ids[i];
                report.frames[i].status = message;
            } else {
                throw;  // malformed content: fail the run
            }
        }
    });

    double rmse_sum = 0.0, streak_sum = 0.0, assoc_ms_sum = 0.0, match_ms_sum = 0.0;
    int rmse_n = 0, streak_n = 0;
    for (const FrameResult& f : report.frames) {
        if (f.status != "ok") {
            ++report.frames_failed;
            continue;
        }
        ++report.frames_ok;
        report.total_pairs += f.pairs;
        report.total_true_pairs += f.true_pairs;
        report.total_gt_objects += f.gt_objects;
        assoc_ms_sum += f.association_ms;
        match_ms_sum += f.matching_ms;
        if (f.depth_rmse_m) {
            rmse_sum += *f.depth_rmse_m;
            ++rmse_n;
        }
        if (f.mean_streak_index) {
            streak_sum += *f.mean_streak_index;
            ++streak_n;
        }
    }
    if (report.total_gt_objects > 0)
        report.association_accuracy =
            static_cast<double>(report.total_true_pairs) / report.total_gt_objects;
    if (rmse_n > 0) report.mean_depth_rmse_m = rmse_sum / rmse_n;
    if (streak_n > 0) report.mean_streak_index = streak_sum / streak_n;
    if (report.frames_ok > 0) {
        report.mean_association_ms = assoc_ms_sum / report.frames_ok;
        report.mean_matching_ms = match_ms_sum / report.frames_ok;
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        {
            std::ofstream out(out_dir / "metrics.csv", std::ios::binary);
            out << metrics_csv(report);
        }
        {
            std::ofstream out(out_dir / "timings.csv", std::ios::binary);
            out << timings_csv(report);
        }
        {
            std::ofstream out(out_dir / "report.json");
            out << report_json(report).dump(2) << '\n';
        }
        {
            std::ofstream out(out_dir / "effective_config.json");
            out << effective_config_json(config).dump(2) << '\n';
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Benchmark: stage timings and the object-centric vs full-image comparison.

struct BenchConfig {
    CameraRig rig{721.0, 721.0, 621.0, 187.0, 0.54, 1242, 375};
    int match_objects = 1;        // objects in the matcher-timing scene
    int association_objects = 8;  // objects in the association-timing scene
    int association_reps = 10;
    std::uint64_t seed = 7;
    MatcherOptions matcher;
    FullImageMatcherOptions full_image;
};

struct BenchReport {
    double association_ms_per_frame = 0.0;
    double crop_census_volume_ms = 0.0;
    double aggregation_ms = 0.0;
    double reconstruction_ms = 0.0;
    double object_centric_total_ms = 0.0;
    double full_image_ms = 0.0;
    std::size_t cells_per_object = 0;
    std::size_t full_image_cells = 0;
    double cell_ratio = 0.0;  // per-object cells / full-image cells
    double speedup = 0.0;     // full-image time / object-centric total
};

inline json bench_json(const BenchReport& r) {
    json j;
    j["association_ms_per_frame"] = r.association_ms_per_frame;
    j["crop_census_volume_ms"] = r.crop_census_volume_ms;
    j["aggregation_ms"] = r.aggregation_ms;
    j["reconstruction_ms"] = r.reconstruction_ms;
    j["object_centric_total_ms"] = r.object_centric_total_ms;
    j["full_image_ms"] = r.full_image_ms;
    j["cells_per_object"] = r.cells_per_object;
    j["full_image_cells"] = r.full_image_cells;
    j["cell_ratio"] = r.cell_ratio;
    j["speedup"] = r.speedup;
    return j;
}

inline BenchReport bench(const BenchConfig& config) {
    config.rig.validate();
    config.matcher.validate();
    BenchReport report;
    report.cells_per_object = object_centric_cell_count(config.matcher);
    report.full_image_cells = full_image_cell_count(config.rig.image_width, config.rig.image_height,
                                                    config.full_image.num_disparities);
    report.cell_ratio =
        static_cast<double>(report.cells_per_object) / static_cast<double>(report.full_image_cells);

    // Matcher scene: spread objects across the image at moderate depth.
    synth::SceneConfig match_scene;
    match_scene.detection_jitter_px = 0.0;
    for (int i = 0; i < config.match_objects; ++i) {
        synth::SynthObjectSpec obj;
        obj.z = 14.0 + 3.0 * i;
        const double cu =
            config.rig.image_width * (i + 0.5) / std::max(1, config.match_objects);
        obj.x = (cu - config.rig.c_u) * obj.z / config.rig.f_u;
        obj.y = 0.2;
        match_scene.objects.push_back(obj);
    }
    const synth::SynthFrame frame = synth::generate(match_scene, config.rig, config.seed);

    const int cw = config.matcher.canonical_width, ch = config.matcher.canonical_height;
    for (std::size_t i = 0; i < frame.gt_left_boxes.size(); ++i) {
        const Box2D& lb = frame.gt_left_boxes[i];
        const Box2D& rb = frame.gt_right_boxes[i];

        auto t0 = std::chrono::steady_clock::now();
        const Grid<float> left_crop = grayscale(crop_resize_bilinear(frame.left, lb, cw, ch));
        const Grid<float> right_crop = grayscale(crop_resize_bilinear(frame.right, rb, cw, ch));
        CostVolume cv =
            build_cost_volume(left_crop, right_crop, config.matcher.d_local_min,
                              config.matcher.d_local_max, config.matcher.census_width,
                              config.matcher.census_height);
        report.crop_census_volume_ms += detail::elapsed_ms(t0);

        t0 = std::chrono::steady_clock::now();
        cv = aggregate(std::move(cv), config.matcher);
        report.aggregation_ms += detail::elapsed_ms(t0);

        t0 = std::chrono::steady_clock::now();
        const SoftArgminResult sa = soft_argmin(cv, config.matcher.temperature);
        const bool lr_check = config.matcher.lr_max_diff > 0.0;
        const ValueMap<DisparityUnit> right_disp =
            lr_check ? right_view_disparity(cv, config.matcher.temperature)
                     : ValueMap<DisparityUnit>();
        LocalDisparityMap local(cw, ch, lb, rb);
        const InstanceMask mask =
            synth::canonical_mask(frame.instance_grid, lb, static_cast<int>(i) + 1, cw, ch);
        for (int j = 0; j < ch; ++j)
            for (int k = 0; k < cw; ++k) {
                if (!mask.mask.at(k, j) || sa.confidence.at(k, j) < config.matcher.confidence_min)
                    continue;
                const double d = sa.disparity.at(k, j);
                if (lr_check) {
                    const int ir = static_cast<int>(std::lround(k - d));
                    if (ir >= 0 && ir < cw && right_disp.is_valid(ir, j) &&
                        std::abs(d - right_disp.values.at(ir, j)) > config.matcher.lr_max_diff)
                        continue;
                }
                local.set_local(k, j, d);
            }
        const DisparityRegion region = local_to_global(local);
        const DepthMap depth = disparity_to_depth(region.map, config.rig);
        const ObjectPointCloud cloud =
            back_project(depth, config.rig, region.u0, region.v0, static_cast<int>(i) + 1);
        report.reconstruction_ms += detail::elapsed_ms(t0);
        OCS_REQUIRE(!cloud.empty(), "bench matcher produced an empty cloud");
    }
    report.object_centric_total_ms =
        report.crop_census_volume_ms + report.aggregation_ms + report.reconstruction_ms;

    {
        const auto t0 = std::chrono::steady_clock::now();
        const GlobalDisparityMap full = match_full_image(frame.left, frame.right, config.full_image);
        report.full_image_ms = detail::elapsed_ms(t0);
        OCS_REQUIRE(full.valid_count() > 0, "bench full-image matcher produced nothing");
    }
    report.speedup = report.full_image_ms / std::max(1e-9, report.object_centric_total_ms);

    // Association scene.
    synth::SceneConfig assoc_scene;
    SynthDatasetConfig assoc_cfg;
    assoc_cfg.rig = config.rig;
    assoc_cfg.min_objects = config.association_objects;
    assoc_cfg.max_objects = config.association_objects;
    std::mt19937_64 gen(synth::hash64(config.seed ^ 0xabcdef12345ULL));
    assoc_scene.objects = random_objects(assoc_cfg, gen);
    assoc_scene.detection_jitter_px = 2.0;
    const synth::SynthFrame assoc_frame = synth::generate(assoc_scene, config.rig, config.seed + 1);

    std::vector<HeightDisparitySample> samples;
    for (std::size_t i = 0; i < assoc_frame.gt_left_boxes.size(); ++i)
        samples.push_back({assoc_frame.gt_left_boxes[i].height(),
                           assoc_frame.gt_left_boxes[i].center_u() -
                               assoc_frame.gt_right_boxes[i].center_u()});
    const HeightDisparityModel model = fit_height_disparity(samples);
    const std::vector<Detection2D> left = io::detections_only(assoc_frame.detections_left);
    const std::vector<Detection2D> right = io::detections_only(assoc_frame.detections_right);
    AssociationOptions assoc_options;
    assoc_options.gate_sigma_floor = 6.0;

    const auto t0 = std::chrono::steady_clock::now();
    for (int rep = 0; rep < config.association_reps; ++rep) {
        const AssociationResult res =
            associate(left, right, model, assoc_frame.left, assoc_frame.right, assoc_options);
        OCS_REQUIRE(!res.pairs.empty(), "bench association produced no pairs");
    }
    report.association_ms_per_frame = detail::elapsed_ms(t0) / config.association_reps;
    return report;
}

}  // namespace ocstereo::pipeline
