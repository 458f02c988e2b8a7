#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "ocstereo/core.hpp"

using namespace ocstereo;
using Catch::Matchers::WithinAbs;

TEST_CASE("grid stores values row-major") {
    Grid<int> g(3, 2, 7);
    REQUIRE(g.width() == 3);
    REQUIRE(g.height() == 2);
    REQUIRE(g.size() == 6);
    for (int v = 0; v < 2; ++v)
        for (int u = 0; u < 3; ++u) REQUIRE(g.at(u, v) == 7);
    g.at(2, 1) = 42;
    REQUIRE(g.data()[1 * 3 + 2] == 42);
    REQUIRE(g.row(1)[2] == 42);
    REQUIRE(g.in_bounds(0, 0));
    REQUIRE(g.in_bounds(2, 1));
    REQUIRE_FALSE(g.in_bounds(3, 0));
    REQUIRE_FALSE(g.in_bounds(0, 2));
    REQUIRE_FALSE(g.in_bounds(-1, 0));
    Grid<int> h = g;
    REQUIRE(h == g);
    h.at(0, 0) = 1;
    REQUIRE_FALSE(h == g);
}

TEST_CASE("value map tracks validity per pixel") {
    GlobalDisparityMap m(4, 3);
    REQUIRE(m.width() == 4);
    REQUIRE(m.height() == 3);
    REQUIRE(m.valid_count() == 0);
    REQUIRE_FALSE(m.is_valid(1, 1));
    m.set(1, 1, 12.5);
    REQUIRE(m.is_valid(1, 1));
    REQUIRE(m.values.at(1, 1) == 12.5);
    REQUIRE(m.valid_count() == 1);
    m.invalidate(1, 1);
    REQUIRE_FALSE(m.is_valid(1, 1));
    REQUIRE(m.values.at(1, 1) == 0.0);
    REQUIRE(m.valid_count() == 0);
}

TEST_CASE("2d box accessors and hand-checked IoU") {
    Box2D a{0.0, 0.0, 2.0, 2.0};
    Box2D b{1.0, 1.0, 3.0, 3.0};
    REQUIRE(a.width() == 2.0);
    REQUIRE(a.height() == 2.0);
    REQUIRE(a.center_u() == 1.0);
    REQUIRE(a.center_v() == 1.0);
    REQUIRE(a.area() == 4.0);
    // Overlap is the unit square; union is 4 + 4 - 1 = 7.
    REQUIRE_THAT(iou_2d(a, b), WithinAbs(1.0 / 7.0, 1e-15));
    REQUIRE_THAT(iou_2d(b, a), WithinAbs(1.0 / 7.0, 1e-15));
    REQUIRE(iou_2d(a, a) == 1.0);
    Box2D far{10.0, 10.0, 12.0, 12.0};
    REQUIRE(iou_2d(a, far) == 0.0);
    // Boxes that merely touch share no area.
    Box2D touching{2.0, 0.0, 4.0, 2.0};
    REQUIRE(iou_2d(a, touching) == 0.0);
}

TEST_CASE("degenerate boxes and clipping") {
    Box2D inverted{5.0, 5.0, 4.0, 6.0};
    REQUIRE(inverted.degenerate());
    REQUIRE(inverted.area() == 0.0);
    Box2D fine{-3.0, -2.0, 7.0, 9.0};
    REQUIRE_FALSE(fine.degenerate());
    Box2D clipped = fine.clipped(5.0, 5.0);
    REQUIRE(clipped.x_min == 0.0);
    REQUIRE(clipped.y_min == 0.0);
    REQUIRE(clipped.x_max == 5.0);
    REQUIRE(clipped.y_max == 5.0);
    REQUIRE(iou_2d(inverted, fine) == 0.0);
}

namespace {

// Independent point-in-rectangle check: walk the BEV polygon and require the
// point to sit on the same side of every edge (the corners wind
// consistently, so the cross products all share a sign for interior points).
bool inside_bev_polygon(const OrientedBox3D& box, double x, double z) {
    const auto c = box.bev_corners();
    double sign = 0.0;
    for (int i = 0; i < 4; ++i) {
        const auto& p = c[i];
        const auto& q = c[(i + 1) % 4];
        const double cross = (q[0] - p[0]) * (z - p[1]) - (q[1] - p[1]) * (x - p[0]);
        if (cross == 0.0) continue;
        if (sign == 0.0)
            sign = cross > 0 ? 1.0 : -1.0;
        else if ((cross > 0 ? 1.0 : -1.0) != sign)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("axis-aligned oriented box containment") {
    OrientedBox3D box;
    box.center = {1.0, 0.0, 10.0};
    box.length = 4.0;
    box.width = 2.0;
    box.height = 1.5;
    box.yaw = 0.0;
    // y grows downward; the box is centered vertically on center[1].
    REQUIRE_THAT(box.y_top(), WithinAbs(-0.75, 1e-15));
    REQUIRE_THAT(box.y_bottom(), WithinAbs(0.75, 1e-15));
    REQUIRE(box.contains({1.0, 0.0, 10.0}));
    REQUIRE(box.contains({2.9, 0.7, 10.9}));
    REQUIRE_FALSE(box.contains({3.1, 0.0, 10.0}));
    REQUIRE_FALSE(box.contains({1.0, 0.0, 11.1}));
    REQUIRE_FALSE(box.contains({1.0, 0.8, 10.0}));
    REQUIRE_FALSE(box.contains({1.0, -0.8, 10.0}));
}

TEST_CASE("quarter-turn swaps the box footprint axes") {
    OrientedBox3D box;
    box.center = {0.0, 0.0, 5.0};
    box.length = 4.0;
    box.width = 2.0;
    box.height = 2.0;
    box.yaw = std::numbers::pi / 2.0;
    // After the quarter turn the long axis runs along z.
    REQUIRE(box.contains({0.9, 0.0, 6.9}));
    REQUIRE_FALSE(box.contains({1.1, 0.0, 5.0}));
    REQUIRE(box.contains({0.0, 0.0, 6.9}));
    REQUIRE_FALSE(box.contains({0.0, 0.0, 7.1}));
}

TEST_CASE("containment agrees with the BEV polygon on random boxes") {
    std::mt19937_64 gen(9001);
    for (int trial = 0; trial < 200; ++trial) {
        OrientedBox3D box;
        box.center = {rng::uniform(gen, -5.0, 5.0), rng::uniform(gen, -1.0, 1.0),
                      rng::uniform(gen, 5.0, 20.0)};
        box.length = rng::uniform(gen, 0.5, 4.0);
        box.width = rng::uniform(gen, 0.5, 3.0);
        box.height = rng::uniform(gen, 0.5, 2.0);
        box.yaw = rng::uniform(gen, -3.2, 3.2);
        for (int s = 0; s < 20; ++s) {
            Point3D p{box.center[0] + rng::uniform(gen, -3.0, 3.0),
                      box.center[1] + rng::uniform(gen, -2.0, 2.0),
                      box.center[2] + rng::uniform(gen, -3.0, 3.0)};
            const bool in_y = p[1] <= box.y_bottom() && p[1] >= box.y_top();
            const bool expect = in_y && inside_bev_polygon(box, p[0], p[2]);
            if (box.contains(p) != expect) {
                CAPTURE(trial, s, p[0], p[1], p[2], box.yaw);
                REQUIRE(box.contains(p) == expect);
            }
        }
    }
}

TEST_CASE("bev corners of an unrotated box") {
    OrientedBox3D box;
    box.center = {2.0, 0.0, 8.0};
    box.length = 4.0;
    box.width = 2.0;
    box.height = 1.0;
    box.yaw = 0.0;
    const auto c = box.bev_corners();
    double min_x = 1e9, max_x = -1e9, min_z = 1e9, max_z = -1e9;
    for (const auto& p : c) {
        min_x = std::min(min_x, p[0]);
        max_x = std::max(max_x, p[0]);
        min_z = std::min(min_z, p[1]);
        max_z = std::max(max_z, p[1]);
    }
    REQUIRE_THAT(min_x, WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(max_x, WithinAbs(4.0, 1e-12));
    REQUIRE_THAT(min_z, WithinAbs(7.0, 1e-12));
    REQUIRE_THAT(max_z, WithinAbs(9.0, 1e-12));
    REQUIRE_THAT(box.z_far_face(), WithinAbs(9.0, 1e-12));

    const auto all = box.corners();
    REQUIRE(all.size() == 8);
    for (int i = 0; i < 4; ++i) {
        REQUIRE_THAT(all[i][1], WithinAbs(box.y_top(), 1e-12));
        REQUIRE_THAT(all[i + 4][1], WithinAbs(box.y_bottom(), 1e-12));
    }
}

TEST_CASE("box validation rejects non-positive dimensions") {
    OrientedBox3D box;
    box.center = {0.0, 0.0, 5.0};
    box.length = 1.0;
    box.width = 1.0;
    box.height = 1.0;
    REQUIRE_NOTHROW(box.validate());
    box.width = 0.0;
    REQUIRE_THROWS_AS(box.validate(), Error);
    box.width = 1.0;
    box.height = -2.0;
    REQUIRE_THROWS_AS(box.validate(), Error);
}

TEST_CASE("rng helpers are deterministic and in range") {
    std::mt19937_64 a(77), b(77);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng::uniform01(a);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(u == rng::uniform01(b));
    }
    std::mt19937_64 c(5);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng::uniform(c, -3.0, 9.0);
        REQUIRE(v >= -3.0);
        REQUIRE(v < 9.0);
        const int k = rng::uniform_int(c, 2, 6);
        REQUIRE(k >= 2);
        REQUIRE(k <= 6);
    }
    // Both interval endpoints of uniform_int show up.
    std::mt19937_64 d(11);
    bool saw_lo = false, saw_hi = false;
    for (int i = 0; i < 200; ++i) {
        const int k = rng::uniform_int(d, 0, 3);
        saw_lo = saw_lo || k == 0;
        saw_hi = saw_hi || k == 3;
    }
    REQUIRE(saw_lo);
    REQUIRE(saw_hi);
}

TEST_CASE("error guard macro reports its message") {
    try {
        OCS_REQUIRE(false, "expected failure marker");
        FAIL("guard did not throw");
    } catch (const Error& e) {
        REQUIRE(std::string(e.what()).find("expected failure marker") != std::string::npos);
    }
}
