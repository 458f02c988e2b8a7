#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "ocstereo/metrics.hpp"

using namespace ocstereo;
using Catch::Matchers::WithinAbs;

TEST_CASE("smooth l1 hand values") {
    REQUIRE(smooth_l1(0.0) == 0.0);
    REQUIRE_THAT(smooth_l1(0.5), WithinAbs(0.125, 1e-15));
    REQUIRE_THAT(smooth_l1(-0.5), WithinAbs(0.125, 1e-15));
    REQUIRE_THAT(smooth_l1(1.0), WithinAbs(0.5, 1e-15));   // the two branches meet
    REQUIRE_THAT(smooth_l1(2.0), WithinAbs(1.5, 1e-15));
    REQUIRE_THAT(smooth_l1(-3.0), WithinAbs(2.5, 1e-15));
    // Continuity across the knee.
    REQUIRE_THAT(smooth_l1(0.999999) - smooth_l1(1.000001), WithinAbs(0.0, 1e-5));
}

namespace {

ObjectPointCloud cloud_of(std::initializer_list<std::pair<std::array<int, 2>, Point3D>> entries) {
    ObjectPointCloud cloud;
    for (const auto& [px, p] : entries) {
        cloud.pixel_index.push_back(px);
        cloud.points.push_back(p);
    }
    return cloud;
}

}  // namespace

TEST_CASE("point cloud loss on a hand-built correspondence") {
    const ObjectPointCloud truth = cloud_of({
        {{10, 20}, {1.0, 2.0, 10.0}},
        {{11, 20}, {1.1, 2.0, 10.0}},
        {{12, 20}, {1.2, 2.0, 10.0}},
    });
    // Matched pixels offset by 0.5 m and 2.0 m in x only:
    // smooth_l1(0.5) + smooth_l1(2.0) averaged = (0.125 + 1.5) / 2.
    const ObjectPointCloud predicted = cloud_of({
        {{10, 20}, {1.5, 2.0, 10.0}},
        {{11, 20}, {3.1, 2.0, 10.0}},
        {{99, 99}, {0.0, 0.0, 1.0}},  // no counterpart; ignored
    });
    REQUIRE_THAT(point_cloud_loss(predicted, truth), WithinAbs(0.8125, 1e-12));
    // Identical clouds lose nothing.
    REQUIRE(point_cloud_loss(truth, truth) == 0.0);
    // Offsets on all three axes add up.
    const ObjectPointCloud shifted = cloud_of({
        {{10, 20}, {1.5, 2.5, 12.0}},
    });
    REQUIRE_THAT(point_cloud_loss(shifted, truth), WithinAbs(0.125 + 0.125 + 1.5, 1e-12));
}

TEST_CASE("point cloud loss requires shared pixels") {
    const ObjectPointCloud a = cloud_of({{{0, 0}, {0.0, 0.0, 1.0}}});
    const ObjectPointCloud b = cloud_of({{{5, 5}, {0.0, 0.0, 1.0}}});
    REQUIRE_THROWS_AS(point_cloud_loss(a, b), Error);
}

TEST_CASE("depth rmse over jointly valid pixels") {
    DepthMap predicted(2, 1), truth(2, 1);
    predicted.set(0, 0, 10.0);
    predicted.set(1, 0, 11.0);
    truth.set(0, 0, 10.5);
    truth.set(1, 0, 10.5);
    // Errors -0.5 and 0.5: rmse = 0.5 exactly.
    REQUIRE_THAT(depth_rmse(predicted, truth), WithinAbs(0.5, 1e-12));

    // A pixel missing on either side drops out of the average.
    DepthMap sparse(2, 1);
    sparse.set(0, 0, 10.5);
    REQUIRE_THAT(depth_rmse(predicted, sparse), WithinAbs(0.5, 1e-12));

    DepthMap empty(2, 1);
    REQUIRE_THROWS_AS(depth_rmse(predicted, empty), Error);
    DepthMap wrong(3, 1);
    REQUIRE_THROWS_AS(depth_rmse(predicted, wrong), Error);
}

TEST_CASE("streaking index counts points outside the inflated box") {
    OrientedBox3D box;
    box.center = {0.0, 0.0, 8.0};
    box.length = 2.0;
    box.width = 2.0;
    box.height = 2.0;
    box.yaw = 0.0;
    // margin 0.3 inflates each dimension to 2.6: half-extent 1.3.
    ObjectPointCloud cloud = cloud_of({
        {{0, 0}, {0.0, 0.0, 8.0}},    // center: inside
        {{1, 0}, {1.25, 0.0, 8.0}},   // within the margin: inside
        {{2, 0}, {0.0, 0.0, 9.4}},    // 1.4 behind the center: outside
        {{3, 0}, {0.0, 0.0, 20.0}},   // deep streak: outside
    });
    REQUIRE_THAT(streaking_index(cloud, box, 0.3), WithinAbs(0.5, 1e-12));
    // A zero margin tightens the test to the box itself, where only the
    // center point survives.
    REQUIRE_THAT(streaking_index(cloud, box, 0.0), WithinAbs(0.75, 1e-12));
    ObjectPointCloud tight = cloud_of({{{0, 0}, {1.25, 0.0, 8.0}}});
    REQUIRE_THAT(streaking_index(tight, box, 0.0), WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(streaking_index(tight, box, 0.3), WithinAbs(0.0, 1e-12));

    REQUIRE_THROWS_AS(streaking_index(ObjectPointCloud{}, box, 0.3), Error);
    REQUIRE_THROWS_AS(streaking_index(tight, box, -0.1), Error);
}

TEST_CASE("streaking index respects box yaw") {
    OrientedBox3D box;
    box.center = {0.0, 0.0, 10.0};
    box.length = 4.0;
    box.width = 1.0;
    box.height = 2.0;
    box.yaw = std::numbers::pi / 2.0;  // long axis now along z
    ObjectPointCloud cloud = cloud_of({
        {{0, 0}, {0.0, 0.0, 11.8}},  // on the rotated long axis: inside
        {{1, 0}, {1.8, 0.0, 10.0}},  // where the long axis used to be: outside
    });
    REQUIRE_THAT(streaking_index(cloud, box, 0.0), WithinAbs(0.5, 1e-12));
}
