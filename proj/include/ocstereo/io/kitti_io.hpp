#pragma once

#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ocstereo/association.hpp"
#include "ocstereo/core.hpp"
#include "ocstereo/eval.hpp"
#include "ocstereo/io/text.hpp"

namespace ocstereo::io {

/// One KITTI label line. `location` is the bottom-face center in camera
/// coordinates and `rotation_y` the yaw about the vertical axis, exactly as
/// in the label text; conversions to the geometric-center box live below.
struct KittiLabel {
    std::string type;
    double truncated = 0.0;
    int occluded = 0;
    double alpha = 0.0;
    Box2D bbox;
    double height = 0.0;  // meters
    double width = 0.0;
    double length = 0.0;
    std::array<double, 3> location{0.0, 0.0, 0.0};
    double rotation_y = 0.0;
    std::optional<double> score;  // present on result files only
};

inline std::vector<KittiLabel> parse_kitti_labels(std::istream& in) {
    std::vector<KittiLabel> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        KittiLabel l;
        OCS_REQUIRE(static_cast<bool>(row >> l.type >> l.truncated >> l.occluded >> l.alpha >>
                                      l.bbox.x_min >> l.bbox.y_min >> l.bbox.x_max >> l.bbox.y_max >>
                                      l.height >> l.width >> l.length >> l.location[0] >>
                                      l.location[1] >> l.location[2] >> l.rotation_y),
                    "malformed label line: " + line);
        double s;
        if (row >> s) l.score = s;
        labels.push_back(std::move(l));
    }
    return labels;
}

inline std::string format_kitti_label(const KittiLabel& l) {
    std::string out = l.type;
    for (double v : {l.truncated, static_cast<double>(l.occluded), l.alpha, l.bbox.x_min,
                     l.bbox.y_min, l.bbox.x_max, l.bbox.y_max, l.height, l.width, l.length,
                     l.location[0], l.location[1], l.location[2], l.rotation_y}) {
        out += ' ';
        out += fmt_double(v);
    }
    if (l.score) {
        out += ' ';
        out += fmt_double(*l.score);
    }
    out += '\n';
    return out;
}

/// KITTI locations sit on the bottom face; our boxes use the geometric
/// center (y points down, so the center is half a height above the location).
inline OrientedBox3D box_from_label(const KittiLabel& l) {
    OrientedBox3D box;
    box.center = {l.location[0], l.location[1] - 0.5 * l.height, l.location[2]};
    box.length = l.length;
    box.width = l.width;
    box.height = l.height;
    box.yaw = l.rotation_y;
    return box;
}

inline KittiLabel label_from_box(const OrientedBox3D& box, const std::string& type,
                                 const Box2D& bbox, std::optional<double> score = std::nullopt) {
    KittiLabel l;
    l.type = type;
    l.bbox = bbox;
    l.height = box.height;
    l.width = box.width;
    l.length = box.length;
    l.location = {box.center[0], box.center[1] + 0.5 * box.height, box.center[2]};
    l.rotation_y = box.yaw;
    l.score = score;
    return l;
}

inline GroundTruthObject ground_truth_from_label(const KittiLabel& l) {
    GroundTruthObject gt;
    gt.box = box_from_label(l);
    gt.bbox = l.bbox;
    gt.occlusion = l.occluded;
    gt.truncation = l.truncated;
    gt.label = l.type;
    return gt;
}

inline ScoredBox3D scored_box_from_label(const KittiLabel& l) {
    return ScoredBox3D{box_from_label(l), l.score.value_or(1.0), l.type};
}

// ---------------------------------------------------------------------------
// 2D detections as CSV: label,score,x_min,y_min,x_max,y_max,object_id. The
// object id is the generator's ground-truth identity (-1 when unknown); the
// reader also accepts 6-column rows without it.

inline constexpr const char* kDetectionsCsvHeader = "label,score,x_min,y_min,x_max,y_max,object_id";

struct DetectionRecord {
    Detection2D detection;
    int object_id = -1;
};

inline std::string format_detections_csv(std::span<const DetectionRecord> records) {
    std::string out = std::string(kDetectionsCsvHeader) + "\n";
    for (const DetectionRecord& r : records) {
        out += r.detection.label + ',' + fmt_double(r.detection.score) + ',' +
               fmt_double(r.detection.box.x_min) + ',' + fmt_double(r.detection.box.y_min) + ',' +
               fmt_double(r.detection.box.x_max) + ',' + fmt_double(r.detection.box.y_max) + ',' +
               std::to_string(r.object_id) + '\n';
    }
    return out;
}

inline std::vector<DetectionRecord> parse_detections_csv(std::istream& in) {
    std::vector<DetectionRecord> records;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("label,", 0) == 0) continue;  // header
        }
        std::vector<std::string> fields;
        std::istringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        OCS_REQUIRE(fields.size() == 6 || fields.size() == 7,
                    "malformed detection row: " + line);
        DetectionRecord r;
        r.detection.label = fields[0];
        r.detection.score = std::stod(fields[1]);
        r.detection.box = {std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4]),
                           std::stod(fields[5])};
        if (fields.size() == 7) r.object_id = std::stoi(fields[6]);
        records.push_back(std::move(r));
    }
    return records;
}

inline std::vector<Detection2D> detections_only(std::span<const DetectionRecord> records) {
    std::vector<Detection2D> out;
    out.reserve(records.size());
    for (const DetectionRecord& r : records) out.push_back(r.detection);
    return out;
}

}  // namespace ocstereo::io
