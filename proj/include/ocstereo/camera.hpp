#pragma once

#include <array>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ocstereo/core.hpp"

namespace ocstereo {

/// Disparities at or below this are treated as unmeasurable and the cell is
/// invalidated instead of producing an absurd depth.
inline constexpr double kMinPositiveDisparity = 1e-3;

/// Rectified pinhole stereo rig. Units: pixels for intrinsics, meters for the
/// baseline.
struct CameraRig {
    double f_u = 0.0;
    double f_v = 0.0;
    double c_u = 0.0;
    double c_v = 0.0;
    double baseline_b = 0.0;
    int image_width = 0;
    int image_height = 0;

    void validate() const {
        OCS_REQUIRE(f_u > 0.0 && f_v > 0.0, "focal lengths must be positive");
        OCS_REQUIRE(baseline_b > 0.0, "baseline must be positive");
        OCS_REQUIRE(c_u >= 0.0 && c_u < image_width, "principal point x out of sensor");
        OCS_REQUIRE(c_v >= 0.0 && c_v < image_height, "principal point y out of sensor");
    }

    double focal_baseline() const { return f_u * baseline_b; }

    double depth_from_disparity(double d) const { return f_u * baseline_b / d; }
    double disparity_from_depth(double z) const { return f_u * baseline_b / z; }

    /// Pinhole projection of a camera-frame point; requires z > 0.
    std::array<double, 2> project(double x, double y, double z) const {
        return {x * f_u / z + c_u, y * f_v / z + c_v};
    }
};

struct ObjectPointCloud {
    std::vector<std::array<double, 3>> points;       // (x, y, z) meters, camera frame
    std::vector<std::array<int, 2>> pixel_index;     // source pixel (u, v) per point
    int instance_id = -1;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// D = f_u * b / d for cells with a measurable positive disparity; everything
/// else becomes invalid (never clamped).
inline DepthMap disparity_to_depth(const GlobalDisparityMap& d, const CameraRig& rig) {
    rig.validate();
    DepthMap out(d.width(), d.height());
    const double fb = rig.focal_baseline();
    for (int v = 0; v < d.height(); ++v) {
        for (int u = 0; u < d.width(); ++u) {
            if (!d.is_valid(u, v)) continue;
            const double disp = d.values.at(u, v);
            if (!(disp > kMinPositiveDisparity)) continue;
            out.set(u, v, fb / disp);
        }
    }
    return out;
}

/// Exact inverse of disparity_to_depth on the same grid.
inline GlobalDisparityMap depth_to_disparity(const DepthMap& depth, const CameraRig& rig) {
    rig.validate();
    GlobalDisparityMap out(depth.width(), depth.height());
    const double fb = rig.focal_baseline();
    for (int v = 0; v < depth.height(); ++v) {
        for (int u = 0; u < depth.width(); ++u) {
            if (!depth.is_valid(u, v)) continue;
            const double z = depth.values.at(u, v);
            if (!(z > 0.0)) continue;
            out.set(u, v, fb / z);
        }
    }
    return out;
}

/// Back-projects a depth map region into a camera-frame point cloud. The
/// region's pixel (0, 0) sits at global pixel (u_offset, v_offset); pass zero
/// offsets for full-frame maps. pixel_index records global pixels.
inline ObjectPointCloud back_project(const DepthMap& depth, const CameraRig& rig,
                                     int u_offset = 0, int v_offset = 0, int instance_id = -1) {
    rig.validate();
    ObjectPointCloud cloud;
    cloud.instance_id = instance_id;
    cloud.points.reserve(depth.valid_count());
    cloud.pixel_index.reserve(cloud.points.capacity());
    for (int v = 0; v < depth.height(); ++v) {
        for (int u = 0; u < depth.width(); ++u) {
            if (!depth.is_valid(u, v)) continue;
            const double z = depth.values.at(u, v);
            OCS_REQUIRE(z > 0.0, "valid depth cells must be positive");
            const int gu = u + u_offset;
            const int gv = v + v_offset;
            const double x = (gu - rig.c_u) * z / rig.f_u;
            const double y = (gv - rig.c_v) * z / rig.f_v;
            cloud.points.push_back({x, y, z});
            cloud.pixel_index.push_back({gu, gv});
        }
    }
    return cloud;
}

/// Axis-aligned hull of the 8 projected box corners, clipped to the image.
/// Throws if any corner lies at or behind the camera plane; a box outside the
/// frustum comes back degenerate (zero width or height after clipping).
inline Box2D project_box_to_image(const OrientedBox3D& box, const CameraRig& rig) {
    rig.validate();
    box.validate();
    Box2D hull{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& corner : box.corners()) {
        OCS_REQUIRE(corner[2] > 0.0, "box corner at or behind the camera is not projectable");
        const auto uv = rig.project(corner[0], corner[1], corner[2]);
        hull.x_min = std::min(hull.x_min, uv[0]);
        hull.y_min = std::min(hull.y_min, uv[1]);
        hull.x_max = std::max(hull.x_max, uv[0]);
        hull.y_max = std::max(hull.y_max, uv[1]);
    }
    return hull.clipped(rig.image_width, rig.image_height);
}

inline bool box_in_front_of_camera(const OrientedBox3D& box) {
    for (const auto& corner : box.corners())
        if (!(corner[2] > 0.0)) return false;
    return true;
}

/// Parses a KITTI calibration text stream. Expects "P2:" and "P3:" rows of 12
/// values; f_u = P2[0,0], f_v = P2[1,1], c_u = P2[0,2], c_v = P2[1,2],
/// baseline = (P2[0,3] - P3[0,3]) / f_u.
inline CameraRig parse_kitti_calib(std::istream& in, int image_width, int image_height) {
    std::optional<std::array<double, 12>> p2, p3;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string key;
        if (!(row >> key)) continue;
        if (key != "P2:" && key != "P3:") continue;
        std::array<double, 12> m{};
        for (double& x : m) OCS_REQUIRE(static_cast<bool>(row >> x), "truncated projection matrix in calib");
        (key == "P2:" ? p2 : p3) = m;
    }
    OCS_REQUIRE(p2.has_value() && p3.has_value(), "calib must contain P2 and P3 rows");
    CameraRig rig;
    rig.f_u = (*p2)[0];
    rig.f_v = (*p2)[5];
    rig.c_u = (*p2)[2];
    rig.c_v = (*p2)[6];
    OCS_REQUIRE(rig.f_u > 0.0, "P2 focal length must be positive");
    rig.baseline_b = ((*p2)[3] - (*p3)[3]) / rig.f_u;
    rig.image_width = image_width;
    rig.image_height = image_height;
    rig.validate();
    return rig;
}

inline std::string format_kitti_calib(const CameraRig& rig) {
    char buf[512];
    // P2 is the left (reference) camera: zero translation. P3 encodes the
    // baseline as P3[0,3] = -f_u * b.
    std::snprintf(buf, sizeof(buf),
                  "P2: %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e\n"
                  "P3: %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e %.12e\n",
                  rig.f_u, 0.0, rig.c_u, 0.0, 0.0, rig.f_v, rig.c_v, 0.0, 0.0, 0.0, 1.0, 0.0,
                  rig.f_u, 0.0, rig.c_u, -rig.f_u * rig.baseline_b, 0.0, rig.f_v, rig.c_v, 0.0,
                  0.0, 0.0, 1.0, 0.0);
    return buf;
}

}  // namespace ocstereo
