#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ocstereo/camera.hpp"
#include "ocstereo/core.hpp"
#include "ocstereo/io/text.hpp"

namespace ocstereo::io {

static_assert(std::endian::native == std::endian::little,
              "PLY writer emits raw little-endian scalars");

struct PlyPoint {
    Point3D position{};
    std::array<int, 2> pixel{};
    int instance_id = -1;
};

/// One merged PLY for any number of object clouds. Binary little-endian by
/// default; `ascii` switches to text with full double precision so both forms
/// round-trip exactly.
inline void write_ply(const std::string& path, std::span<const ObjectPointCloud> clouds,
                      bool ascii = false) {
    std::size_t total = 0;
    for (const ObjectPointCloud& c : clouds) total += c.size();

    std::ofstream out(path, std::ios::binary);
    OCS_REQUIRE(out.good(), "cannot open for writing: " + path);
    out << "ply\n"
        << (ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
        << "element vertex " << total << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "property int u\nproperty int v\nproperty int instance_id\n"
        << "end_header\n";
    for (const ObjectPointCloud& cloud : clouds) {
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Point3D& p = cloud.points[i];
            const auto& px = cloud.pixel_index[i];
            if (ascii) {
                out << fmt_exact(p[0]) << ' ' << fmt_exact(p[1]) << ' ' << fmt_exact(p[2]) << ' '
                    << px[0] << ' ' << px[1] << ' ' << cloud.instance_id << '\n';
            } else {
                std::int32_t ints[3] = {px[0], px[1], cloud.instance_id};
                out.write(reinterpret_cast<const char*>(p.data()), sizeof(double) * 3);
                out.write(reinterpret_cast<const char*>(ints), sizeof(ints));
            }
        }
    }
    OCS_REQUIRE(out.good(), "write failed: " + path);
}

inline void write_ply(const std::string& path, const ObjectPointCloud& cloud, bool ascii = false) {
    write_ply(path, std::span<const ObjectPointCloud>(&cloud, 1), ascii);
}

/// Reads PLY files produced by write_ply (either format, exact property
/// layout required).
inline std::vector<PlyPoint> read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    OCS_REQUIRE(in.good(), "cannot open: " + path);

    std::string line;
    OCS_REQUIRE(std::getline(in, line) && line == "ply", "not a PLY file: " + path);
    OCS_REQUIRE(std::getline(in, line), "truncated PLY header: " + path);
    bool ascii;
    if (line == "format ascii 1.0") {
        ascii = true;
    } else if (line == "format binary_little_endian 1.0") {
        ascii = false;
    } else {
        throw Error("unsupported PLY format: " + line);
    }

    std::size_t count = 0;
    std::vector<std::string> properties;
    while (std::getline(in, line)) {
        if (line == "end_header") break;
        std::istringstream row(line);
        std::string key;
        row >> key;
        if (key == "comment") continue;
        if (key == "element") {
            std::string name;
            row >> name >> count;
            OCS_REQUIRE(name == "vertex", "unsupported PLY element: " + name);
        } else if (key == "property") {
            std::string type, name;
            row >> type >> name;
            properties.push_back(type + " " + name);
        }
    }
    const std::vector<std::string> expected = {"double x", "double y",          "double z",
                                               "int u",    "int v", "int instance_id"};
    OCS_REQUIRE(properties == expected, "unexpected PLY property layout: " + path);

    std::vector<PlyPoint> points(count);
    if (ascii) {
        for (PlyPoint& p : points) {
            OCS_REQUIRE(static_cast<bool>(in >> p.position[0] >> p.position[1] >> p.position[2] >>
                                          p.pixel[0] >> p.pixel[1] >> p.instance_id),
                        "truncated PLY payload: " + path);
        }
    } else {
        for (PlyPoint& p : points) {
            std::int32_t ints[3];
            in.read(reinterpret_cast<char*>(p.position.data()), sizeof(double) * 3);
            in.read(reinterpret_cast<char*>(ints), sizeof(ints));
            OCS_REQUIRE(in.good(), "truncated PLY payload: " + path);
            p.pixel = {ints[0], ints[1]};
            p.instance_id = ints[2];
        }
    }
    return points;
}

}  // namespace ocstereo::io
