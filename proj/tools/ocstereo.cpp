// Command-line front end: synthetic data generation, per-frame association
// and matching, full pipeline runs, detection evaluation, and benchmarks.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ocstereo/eval.hpp"
#include "ocstereo/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ocstereo;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    OCS_REQUIRE(in.good(), "cannot open config file: " + path);
    json j;
    in >> j;
    return j;
}

// Config file values land in the structs before CLI11 parses, so flags that
// the user actually passed overwrite them: CLI > file > defaults.
std::optional<std::string> prescan_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string_view a(argv[i]);
        if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
        if (a.rfind("--config=", 0) == 0) return std::string(a.substr(9));
    }
    return std::nullopt;
}

void merge_config(const json& j, CameraRig& rig) {
    rig.f_u = j.value("f_u", rig.f_u);
    rig.f_v = j.value("f_v", rig.f_v);
    rig.c_u = j.value("c_u", rig.c_u);
    rig.c_v = j.value("c_v", rig.c_v);
    rig.baseline_b = j.value("baseline", rig.baseline_b);
    rig.image_width = j.value("image_width", rig.image_width);
    rig.image_height = j.value("image_height", rig.image_height);
}

void merge_config(const json& j, synth::SceneConfig& scene) {
    scene.background_depth = j.value("background_depth", scene.background_depth);
    scene.detection_jitter_px = j.value("detection_jitter_px", scene.detection_jitter_px);
    scene.decoys_per_side = j.value("decoys_per_side", scene.decoys_per_side);
    scene.texture_scale = j.value("texture_scale", scene.texture_scale);
    scene.texture_octaves = j.value("texture_octaves", scene.texture_octaves);
    scene.max_disparity = j.value("max_disparity", scene.max_disparity);
    scene.min_depth = j.value("min_depth", scene.min_depth);
    scene.max_depth = j.value("max_depth", scene.max_depth);
    if (j.contains("objects")) {
        scene.objects.clear();
        for (const json& o : j.at("objects")) {
            synth::SynthObjectSpec spec;
            spec.x = o.value("x", spec.x);
            spec.y = o.value("y", spec.y);
            spec.z = o.value("z", spec.z);
            spec.width_m = o.value("width_m", spec.width_m);
            spec.height_m = o.value("height_m", spec.height_m);
            spec.thickness_m = o.value("thickness_m", spec.thickness_m);
            spec.label = o.value("label", spec.label);
            scene.objects.push_back(std::move(spec));
        }
    }
}

void merge_config(const json& j, pipeline::SynthDatasetConfig& c) {
    if (j.contains("rig")) merge_config(j.at("rig"), c.rig);
    c.frames = j.value("frames", c.frames);
    c.seed = j.value("seed", c.seed);
    c.randomize = j.value("randomize", c.randomize);
    c.min_objects = j.value("min_objects", c.min_objects);
    c.max_objects = j.value("max_objects", c.max_objects);
    c.min_z = j.value("min_z", c.min_z);
    c.max_z = j.value("max_z", c.max_z);
    if (j.contains("scene")) merge_config(j.at("scene"), c.scene);
}

void merge_config(const json& j, AssociationOptions& a) {
    a.score_threshold = j.value("score_threshold", a.score_threshold);
    a.crop_size = j.value("crop_size", a.crop_size);
    a.gate_sigma_floor = j.value("gate_sigma_floor", a.gate_sigma_floor);
}

void merge_config(const json& j, MatcherOptions& m) {
    m.d_local_min = j.value("d_local_min", m.d_local_min);
    m.d_local_max = j.value("d_local_max", m.d_local_max);
    m.canonical_width = j.value("canonical_width", m.canonical_width);
    m.canonical_height = j.value("canonical_height", m.canonical_height);
    m.census_width = j.value("census_width", m.census_width);
    m.census_height = j.value("census_height", m.census_height);
    m.box_filter_radius = j.value("box_filter_radius", m.box_filter_radius);
    m.sgm_p1 = j.value("sgm_p1", m.sgm_p1);
    m.sgm_p2 = j.value("sgm_p2", m.sgm_p2);
    m.temperature = j.value("temperature", m.temperature);
    m.confidence_min = j.value("confidence_min", m.confidence_min);
    m.lr_max_diff = j.value("lr_max_diff", m.lr_max_diff);
}

void merge_config(const json& j, pipeline::PipelineConfig& c) {
    if (j.contains("association")) merge_config(j.at("association"), c.association);
    if (j.contains("matcher")) merge_config(j.at("matcher"), c.matcher);
    c.streak_margin = j.value("streak_margin", c.streak_margin);
    c.ascii_ply = j.value("ascii_ply", c.ascii_ply);
    c.threads = j.value("threads", c.threads);
}

json synth_config_json(const pipeline::SynthDatasetConfig& c) {
    json j;
    j["rig"] = {{"f_u", c.rig.f_u},        {"f_v", c.rig.f_v},
                {"c_u", c.rig.c_u},        {"c_v", c.rig.c_v},
                {"baseline", c.rig.baseline_b}, {"image_width", c.rig.image_width},
                {"image_height", c.rig.image_height}};
    j["frames"] = c.frames;
    j["seed"] = c.seed;
    j["randomize"] = c.randomize;
    j["min_objects"] = c.min_objects;
    j["max_objects"] = c.max_objects;
    j["min_z"] = c.min_z;
    j["max_z"] = c.max_z;
    j["scene"] = {{"background_depth", c.scene.background_depth},
                  {"detection_jitter_px", c.scene.detection_jitter_px},
                  {"decoys_per_side", c.scene.decoys_per_side},
                  {"texture_scale", c.scene.texture_scale},
                  {"texture_octaves", c.scene.texture_octaves},
                  {"max_disparity", c.scene.max_disparity},
                  {"min_depth", c.scene.min_depth},
                  {"max_depth", c.scene.max_depth}};
    return j;
}

void add_pipeline_flags(CLI::App* cmd, pipeline::PipelineConfig& config) {
    cmd->add_option("--score-threshold", config.association.score_threshold,
                    "detection score cutoff before association");
    cmd->add_option("--crop-size", config.association.crop_size, "association SSIM crop size");
    cmd->add_option("--gate-floor", config.association.gate_sigma_floor,
                    "minimum disparity gate tolerance, px");
    cmd->add_option("--d-min", config.matcher.d_local_min, "local disparity range lower bound");
    cmd->add_option("--d-max", config.matcher.d_local_max, "local disparity range upper bound");
    cmd->add_option("--canonical-width", config.matcher.canonical_width, "matcher crop width");
    cmd->add_option("--canonical-height", config.matcher.canonical_height, "matcher crop height");
    cmd->add_option("--box-radius", config.matcher.box_filter_radius, "cost box filter radius");
    cmd->add_option("--p1", config.matcher.sgm_p1, "small disparity-step penalty");
    cmd->add_option("--p2", config.matcher.sgm_p2, "large disparity-step penalty");
    cmd->add_option("--temperature", config.matcher.temperature, "soft-argmin temperature");
    cmd->add_option("--confidence-min", config.matcher.confidence_min,
                    "drop estimates whose softmax peak is below this");
    cmd->add_option("--lr-max-diff", config.matcher.lr_max_diff,
                    "left-right consistency tolerance, px; <= 0 disables");
    cmd->add_option("--streak-margin", config.streak_margin,
                    "box inflation margin for the streaking index, m");
    cmd->add_flag("--ascii-ply", config.ascii_ply, "write text PLY instead of binary");
}

int run_synth(const pipeline::SynthDatasetConfig& config, const std::string& out_dir) {
    pipeline::write_dataset(pipeline::DatasetLayout{out_dir}, config);
    json echo = synth_config_json(config);
    {
        std::ofstream out(fs::path(out_dir) / "dataset_config.json");
        out << echo.dump(2) << '\n';
    }
    json summary;
    summary["root"] = out_dir;
    summary["frames"] = config.frames;
    summary["config"] = std::move(echo);
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int run_associate(const std::string& dataset, const std::string& frame_id,
                  const std::string& out_path, const pipeline::PipelineConfig& config) {
    const pipeline::DatasetLayout layout{dataset};
    const auto models = pipeline::fit_models(layout, layout.frame_ids());
    const pipeline::FrameData frame = pipeline::load_frame(layout, frame_id);

    std::vector<Detection2D> left, right;
    for (const io::DetectionRecord& r : frame.det_left)
        if (r.detection.score >= config.association.score_threshold) left.push_back(r.detection);
    for (const io::DetectionRecord& r : frame.det_right)
        if (r.detection.score >= config.association.score_threshold) right.push_back(r.detection);

    const AssociationResult result =
        associate(left, right, models, frame.left, frame.right, config.association);

    std::string csv = "left_index,right_index,label,ssim,center_disparity\n";
    for (const RoiPair& p : result.pairs)
        csv += std::to_string(p.left_index) + ',' + std::to_string(p.right_index) + ',' +
               p.left.label + ',' + io::fmt_double(p.ssim_score) + ',' +
               io::fmt_double(p.left.box.center_u() - p.right.box.center_u()) + '\n';
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        out << csv;
    }
    std::cerr << result.pairs.size() << " pairs, " << result.unmatched_left.size()
              << " unmatched left, " << result.unmatched_right.size() << " unmatched right\n";
    return 0;
}

int run_match(const std::string& dataset, const std::string& frame_id, const std::string& out_dir,
              const pipeline::PipelineConfig& config) {
    const pipeline::DatasetLayout layout{dataset};
    const auto models = pipeline::fit_models(layout, layout.frame_ids());
    const pipeline::FrameData frame = pipeline::load_frame(layout, frame_id);
    fs::create_directories(fs::path(out_dir) / "clouds");
    fs::create_directories(fs::path(out_dir) / "disparity");
    const pipeline::FrameResult result =
        pipeline::process_frame(frame, models, config, out_dir);

    json j;
    j["frame"] = result.id;
    j["pairs"] = result.pairs;
    j["left_detections"] = result.left_detections;
    j["right_detections"] = result.right_detections;
    if (result.depth_rmse_m) j["depth_rmse_m"] = *result.depth_rmse_m;
    if (result.mean_streak_index) j["mean_streak_index"] = *result.mean_streak_index;
    if (result.mean_cloud_loss) j["mean_cloud_loss"] = *result.mean_cloud_loss;
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_pipeline_cmd(const std::string& dataset, const std::string& out_dir,
                     const pipeline::PipelineConfig& config) {
    std::cout << pipeline::effective_config_json(config).dump(2) << '\n';
    const pipeline::PipelineReport report = pipeline::run_pipeline(dataset, out_dir, config);
    std::cout << pipeline::report_json(report).dump(2) << '\n';
    return report.frames_ok > 0 || config.dry_run ? 0 : 1;
}

int run_eval(const std::string& gt_dir, const std::string& det_dir, ApOptions options,
             const std::string& out_path) {
    std::vector<EvalFrame> frames;
    std::vector<fs::path> gt_files;
    for (const auto& entry : fs::directory_iterator(gt_dir))
        if (entry.path().extension() == ".txt") gt_files.push_back(entry.path());
    std::sort(gt_files.begin(), gt_files.end());
    OCS_REQUIRE(!gt_files.empty(), "no ground-truth label files in " + gt_dir);

    for (const fs::path& gt_file : gt_files) {
        EvalFrame frame;
        {
            std::ifstream in(gt_file);
            for (const io::KittiLabel& l : io::parse_kitti_labels(in))
                frame.ground_truth.push_back(io::ground_truth_from_label(l));
        }
        const fs::path det_file = fs::path(det_dir) / gt_file.filename();
        if (fs::exists(det_file)) {
            std::ifstream in(det_file);
            for (const io::KittiLabel& l : io::parse_kitti_labels(in))
                frame.detections.push_back(io::scored_box_from_label(l));
        }
        frames.push_back(std::move(frame));
    }

    const std::optional<double> ap = average_precision(frames, options);
    json j;
    j["frames"] = frames.size();
    j["iou_threshold"] = options.iou_threshold;
    if (ap)
        j["ap"] = *ap;
    else
        j["ap"] = nullptr;
    const std::string text = j.dump(2) + '\n';
    std::cout << text;
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << text;
    }
    return 0;
}

int run_bench(const pipeline::BenchConfig& config, const std::string& out_path) {
    const pipeline::BenchReport report = pipeline::bench(config);
    const std::string text = pipeline::bench_json(report).dump(2) + '\n';
    std::cout << text;
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << text;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Object-centric stereo matching pipeline"};
    app.require_subcommand(1);

    const std::optional<std::string> config_path = prescan_config(argc, argv);
    json file_config;
    if (config_path) file_config = load_json_file(*config_path);

    std::string dataset, out_dir, frame_id, out_path, gt_dir, det_dir;

    // synth
    pipeline::SynthDatasetConfig synth_config;
    if (config_path) merge_config(file_config, synth_config);
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic stereo dataset");
    synth_cmd->add_option("--out", out_dir, "dataset output directory")->required();
    synth_cmd->add_option("--config", "JSON config file");
    synth_cmd->add_option("--frames", synth_config.frames, "number of frames");
    synth_cmd->add_option("--seed", synth_config.seed, "generator seed");
    synth_cmd->add_option("--min-objects", synth_config.min_objects, "objects per frame, lower bound");
    synth_cmd->add_option("--max-objects", synth_config.max_objects, "objects per frame, upper bound");
    synth_cmd->add_option("--min-z", synth_config.min_z, "nearest object depth, m");
    synth_cmd->add_option("--max-z", synth_config.max_z, "farthest object depth, m");
    synth_cmd->add_option("--jitter", synth_config.scene.detection_jitter_px,
                          "detection box edge jitter, px");
    synth_cmd->add_option("--decoys-per-side", synth_config.scene.decoys_per_side,
                          "spurious detections per image edge");
    synth_cmd->add_option("--background-depth", synth_config.scene.background_depth,
                          "backdrop depth, m");
    bool fixed_scene = false;
    synth_cmd->add_flag("--fixed", fixed_scene, "use the object list from the config file verbatim");

    // pipeline-like subcommands share one option set
    pipeline::PipelineConfig pipe_config;
    if (config_path) merge_config(file_config, pipe_config);

    CLI::App* assoc_cmd = app.add_subcommand("associate", "pair detections for one frame");
    assoc_cmd->add_option("--dataset", dataset, "dataset directory")->required();
    assoc_cmd->add_option("--frame", frame_id, "frame id, e.g. 000003")->required();
    assoc_cmd->add_option("--out", out_path, "pairs CSV path (default stdout)");
    assoc_cmd->add_option("--config", "JSON config file");
    add_pipeline_flags(assoc_cmd, pipe_config);

    CLI::App* match_cmd = app.add_subcommand("match", "reconstruct one frame's objects");
    match_cmd->add_option("--dataset", dataset, "dataset directory")->required();
    match_cmd->add_option("--frame", frame_id, "frame id")->required();
    match_cmd->add_option("--out", out_dir, "output directory")->required();
    match_cmd->add_option("--config", "JSON config file");
    add_pipeline_flags(match_cmd, pipe_config);

    CLI::App* pipe_cmd = app.add_subcommand("pipeline", "run the full pipeline over a dataset");
    pipe_cmd->add_option("--dataset", dataset, "dataset directory")->required();
    pipe_cmd->add_option("--out", out_dir, "output directory")->required();
    pipe_cmd->add_option("--config", "JSON config file");
    pipe_cmd->add_option("--threads", pipe_config.threads, "worker threads (0 = all cores)");
    pipe_cmd->add_flag("--dry-run", pipe_config.dry_run, "validate the dataset, write nothing");
    add_pipeline_flags(pipe_cmd, pipe_config);

    ApOptions ap_options;
    std::string difficulty = "moderate", kind = "bev";
    CLI::App* eval_cmd = app.add_subcommand("eval", "average precision of 3D detections");
    eval_cmd->add_option("--gt", gt_dir, "ground-truth label directory")->required();
    eval_cmd->add_option("--det", det_dir, "detection label directory (with scores)")->required();
    eval_cmd->add_option("--iou", ap_options.iou_threshold, "IoU threshold");
    eval_cmd->add_option("--difficulty", difficulty, "easy | moderate | hard");
    eval_cmd->add_option("--kind", kind, "bev | 3d");
    eval_cmd->add_option("--label", ap_options.target_label, "evaluate only this class");
    eval_cmd->add_flag("--forty-point", ap_options.forty_point, "40-point interpolation");
    eval_cmd->add_option("--out", out_path, "also write the result JSON here");

    pipeline::BenchConfig bench_config;
    CLI::App* bench_cmd = app.add_subcommand("bench", "stage timings and cost-volume comparison");
    bench_cmd->add_option("--match-objects", bench_config.match_objects, "objects in the matcher scene");
    bench_cmd->add_option("--association-objects", bench_config.association_objects,
                          "objects in the association scene");
    bench_cmd->add_option("--reps", bench_config.association_reps, "association repetitions");
    bench_cmd->add_option("--seed", bench_config.seed, "scene seed");
    bench_cmd->add_option("--out", out_path, "also write the report JSON here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) {
            synth_config.randomize = !fixed_scene;
            return run_synth(synth_config, out_dir);
        }
        if (assoc_cmd->parsed()) return run_associate(dataset, frame_id, out_path, pipe_config);
        if (match_cmd->parsed()) return run_match(dataset, frame_id, out_dir, pipe_config);
        if (pipe_cmd->parsed()) return run_pipeline_cmd(dataset, out_dir, pipe_config);
        if (eval_cmd->parsed()) {
            if (difficulty == "easy")
                ap_options.difficulty = Difficulty::kEasy;
            else if (difficulty == "moderate")
                ap_options.difficulty = Difficulty::kModerate;
            else if (difficulty == "hard")
                ap_options.difficulty = Difficulty::kHard;
            else
                throw Error("unknown difficulty: " + difficulty);
            if (kind == "bev")
                ap_options.kind = IouKind::kBev;
            else if (kind == "3d")
                ap_options.kind = IouKind::k3D;
            else
                throw Error("unknown IoU kind: " + kind);
            return run_eval(gt_dir, det_dir, ap_options, out_path);
        }
        if (bench_cmd->parsed()) return run_bench(bench_config, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
