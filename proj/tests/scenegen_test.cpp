#include <algorithm>
#include <cmath>
#include <set>

#include "coopdet/scenegen.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace coopdet;

namespace {

SceneObject object_at(int id, ObjectClass cls, double x, double y, double w,
                      double l, double h, double yaw) {
  SceneObject o;
  o.id = id;
  o.cls = cls;
  o.box.center = {x, y, kGroundZ + h / 2.0};
  o.box.width = w;
  o.box.length = l;
  o.box.height = h;
  o.box.yaw = yaw;
  return o;
}

Pose sensor_at(double x, double y, double z, double yaw) {
  return Pose{{x, y, z}, yaw};
}

LidarParams coarse_lidar() {
  LidarParams p;
  p.rays = 360;
  p.max_range = 60.0;
  p.samples_per_meter = 2.0;
  return p;
}

bool same_clouds(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].z != b[i].z || a[i].r != b[i].r)
      return false;
  return true;
}

}  // namespace

TEST_SUITE("scenegen") {

TEST_CASE("difficulty labels round-trip through their names") {
  CHECK(parse_occlusion(occlusion_name(OcclusionClass::Moderate)) ==
        OcclusionClass::Moderate);
  CHECK(parse_range(range_name(RangeClass::Far)) == RangeClass::Far);
  CHECK(std::string(occlusion_name(OcclusionClass::Easy)) == "easy");
  CHECK(std::string(range_name(RangeClass::Near)) == "near");
  CHECK_THROWS_AS(parse_occlusion("medium"), std::invalid_argument);
  CHECK_THROWS_AS(parse_range("mid"), std::invalid_argument);
}

TEST_CASE("configuration validators catch each bad field") {
  LidarParams lp;
  lp.rays = 3;
  testutil::throws_with<std::invalid_argument>([&] { lp.validate(); }, "4 lidar rays");
  lp = LidarParams{};
  lp.max_range = 0.0;
  CHECK_THROWS_AS(lp.validate(), std::invalid_argument);
  lp = LidarParams{};
  lp.samples_per_meter = -1.0;
  CHECK_THROWS_AS(lp.validate(), std::invalid_argument);

  SceneConfig cfg;
  cfg.validate();  // defaults are fine
  cfg.frames = 0;
  cfg.validate();  // an empty run is legal
  cfg.frames = -1;
  testutil::throws_with<std::invalid_argument>([&] { cfg.validate(); },
                                               "negative frame count");
  cfg = SceneConfig{};
  cfg.min_vehicles = 5;
  cfg.max_vehicles = 4;
  testutil::throws_with<std::invalid_argument>([&] { cfg.validate(); }, "inverted");
  cfg = SceneConfig{};
  cfg.max_vehicles = 59;
  cfg.max_pedestrians = 2;
  testutil::throws_with<std::invalid_argument>([&] { cfg.validate(); },
                                               "at most 60");
  cfg = SceneConfig{};
  cfg.car_fraction = 1.2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SceneConfig{};
  cfg.placement_retries = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SceneConfig{};
  cfg.detect_tau = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SceneConfig{};
  cfg.noise_scale = -0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SceneConfig{};
  cfg.layout = "occlusion_heavy";
  cfg.infrastructures = 2;
  testutil::throws_with<std::invalid_argument>([&] { cfg.validate(); },
                                               "exactly 3 responders");
  cfg.infrastructures = 3;
  cfg.validate();
  cfg.layout = "motorway";
  testutil::throws_with<std::invalid_argument>([&] { cfg.validate(); },
                                               "unknown layout");
}

TEST_CASE("layouts pin their mounting poses, always facing the origin") {
  const auto check_facing = [](const Pose& p) {
    CHECK(p.yaw == doctest::Approx(std::atan2(-p.position[1], -p.position[0])));
    CHECK(p.position[2] == kInfraSensorZ);
  };

  const auto ring = layout_infra_poses("random", 3);
  REQUIRE(ring.size() == 3);
  CHECK(ring[0].position[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(ring[0].position[1] == doctest::Approx(26.0));
  for (const auto& p : ring) {
    check_facing(p);
    CHECK(std::hypot(p.position[0], p.position[1]) == doctest::Approx(26.0));
  }

  const auto round = layout_infra_poses("roundabout", 2);
  CHECK(round[0].position[0] == doctest::Approx(22.0 * std::cos(kPi / 6.0)));
  CHECK(round[0].position[1] == doctest::Approx(11.0));
  for (const auto& p : round)
    CHECK(std::hypot(p.position[0], p.position[1]) == doctest::Approx(22.0));

  const auto tee1 = layout_infra_poses("t_junction", 1);
  REQUIRE(tee1.size() == 1);
  CHECK(tee1[0].position[0] == doctest::Approx(0.0));
  CHECK(tee1[0].position[1] == doctest::Approx(12.0));
  const auto tee3 = layout_infra_poses("t_junction", 3);
  CHECK(tee3[0].position[0] == doctest::Approx(-16.0));
  CHECK(tee3[1].position[0] == doctest::Approx(0.0));
  CHECK(tee3[2].position[0] == doctest::Approx(16.0));
  for (const auto& p : tee3) {
    CHECK(p.position[1] == doctest::Approx(12.0));
    check_facing(p);
  }

  const auto occ = layout_infra_poses("occlusion_heavy", 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(occ[k].position[0] == doctest::Approx(26.0));
    CHECK(occ[k].position[1] == doctest::Approx(18.0 - 18.0 * k));
    check_facing(occ[k]);
  }

  CHECK_THROWS_AS(layout_infra_poses("motorway", 2), std::invalid_argument);
}

TEST_CASE("a lone box soaks up its rays and stacks vertical samples") {
  // height 1.5 at two samples per meter: three returns per absorbed ray
  const std::vector<SceneObject> objects = {
      object_at(0, ObjectClass::Car, 10.0, 0.0, 1.6, 3.9, 1.5, 0.0)};
  const Pose sensor = sensor_at(0, 0, kVehicleSensorZ, 0);
  const SensorObservation obs =
      simulate_lidar(objects, sensor, sensor, coarse_lidar(), 60.0, 99);

  REQUIRE(obs.visible_points.size() == 1);
  CHECK(obs.visible_rays[0] > 0);
  CHECK(obs.visible_rays[0] == obs.potential_rays[0]);  // nothing else around
  CHECK(obs.visible_points[0] == 3 * obs.visible_rays[0]);
  CHECK(obs.cloud.size() == static_cast<size_t>(obs.visible_points[0]));
  for (const auto& p : obs.cloud) {
    CHECK(p.x >= 8.0);   // front face sits at 10 - 3.9/2
    CHECK(p.x <= 12.0);
    CHECK(std::fabs(p.y) <= 0.81);
    // sensor and vehicle poses coincide here, so the local frame is the
    // shared frame and z spans the box itself
    CHECK(p.z >= -2.56 - 1e-9);
    CHECK(p.z <= -1.06 + 1e-9);
    CHECK(p.r >= 0.05);
    CHECK(p.r <= 1.0);
  }

  const SensorObservation again =
      simulate_lidar(objects, sensor, sensor, coarse_lidar(), 60.0, 99);
  CHECK(same_clouds(obs.cloud, again.cloud));
  const SensorObservation other =
      simulate_lidar(objects, sensor, sensor, coarse_lidar(), 60.0, 100);
  CHECK(other.visible_points[0] == obs.visible_points[0]);  // same geometry
  CHECK_FALSE(same_clouds(obs.cloud, other.cloud));         // fresh reflectances

  CHECK_THROWS_AS(
      simulate_lidar(objects, sensor, sensor, coarse_lidar(), 0.0, 99),
      std::invalid_argument);
}

TEST_CASE("a near box shadows a far one") {
  const std::vector<SceneObject> objects = {
      object_at(0, ObjectClass::Car, 5.0, 0.0, 1.6, 3.9, 1.56, 0.0),
      object_at(1, ObjectClass::Car, 15.0, 0.0, 1.6, 3.9, 1.56, 0.0)};
  const Pose sensor = sensor_at(0, 0, kVehicleSensorZ, 0);
  const SensorObservation obs =
      simulate_lidar(objects, sensor, sensor, coarse_lidar(), 60.0, 5);
  CHECK(obs.visible_rays[0] > 0);
  CHECK(obs.potential_rays[1] > 0);   // it would be seen...
  CHECK(obs.visible_rays[1] == 0);    // ...but the near car eats every ray
  CHECK(obs.visible_points[1] == 0);
}

TEST_CASE("range limits also cap potential visibility") {
  const std::vector<SceneObject> objects = {
      object_at(0, ObjectClass::Car, 30.0, 0.0, 1.6, 3.9, 1.56, 0.0)};
  const Pose sensor = sensor_at(0, 0, kVehicleSensorZ, 0);
  const SensorObservation obs =
      simulate_lidar(objects, sensor, sensor, coarse_lidar(), 20.0, 5);
  CHECK(obs.potential_rays[0] == 0);
  CHECK(obs.visible_rays[0] == 0);
  CHECK(obs.cloud.empty());
}

TEST_CASE("clouds come back in the sensor's own frame") {
  // pole behind the box, looking back toward the origin
  const std::vector<SceneObject> objects = {
      object_at(0, ObjectClass::Car, 5.0, 0.0, 1.6, 3.9, 1.56, 0.0)};
  const Pose pole = sensor_at(10.0, 0.0, kInfraSensorZ, kPi);
  const Pose vehicle = sensor_at(0, 0, kVehicleSensorZ, 0);
  const SensorObservation obs =
      simulate_lidar(objects, pole, vehicle, coarse_lidar(), 60.0, 7);
  REQUIRE(obs.cloud.size() > 0);
  for (const auto& p : obs.cloud) {
    CHECK(p.x >= 3.0);  // its near face, 10 - 6.95, along the pole's +x
    CHECK(p.x <= 7.1);
    CHECK(std::fabs(p.y) <= 0.81);
  }
  // mapping the cloud through the shared frame lands on the box again
  const PointCloud shared = transform_cloud_to_vehicle(obs.cloud, pole, vehicle);
  for (const auto& p : shared) {
    CHECK(p.x >= 3.0);
    CHECK(p.x <= 7.0);
  }
}

TEST_CASE("occlusion fractions and range split the difficulty classes") {
  SceneFrame frame;
  frame.vehicle_pose = sensor_at(0, 0, kVehicleSensorZ, 0);
  frame.objects = {
      object_at(0, ObjectClass::Car, 10, 0, 1.6, 3.9, 1.56, 0),   // clear
      object_at(1, ObjectClass::Car, 15, 5, 1.6, 3.9, 1.56, 0),   // half hidden
      object_at(2, ObjectClass::Car, 18, -4, 1.6, 3.9, 1.56, 0),  // mostly hidden
      object_at(3, ObjectClass::Car, 25, 0, 1.6, 3.9, 1.56, 0),   // far, unseen
      object_at(4, ObjectClass::Car, 20, 0, 1.6, 3.9, 1.56, 0),   // boundary near
      object_at(5, ObjectClass::Car, 6, 2, 1.6, 3.9, 1.56, 0),    // exactly 1/3
  };
  frame.vehicle_obs.visible_rays = {10, 5, 2, 0, 9, 6};
  frame.vehicle_obs.potential_rays = {10, 10, 10, 0, 9, 9};
  frame.vehicle_obs.visible_points = {30, 15, 6, 0, 27, 18};

  const auto tags = tag_difficulty(frame);
  CHECK(tags[0].occlusion == OcclusionClass::Easy);
  CHECK(tags[1].occlusion == OcclusionClass::Moderate);
  CHECK(tags[2].occlusion == OcclusionClass::Hard);
  CHECK(tags[3].occlusion == OcclusionClass::Hard);  // zero potential
  CHECK(tags[5].occlusion == OcclusionClass::Moderate);  // 1/3 is not Easy

  CHECK(tags[0].range == RangeClass::Near);
  CHECK(tags[1].range == RangeClass::Near);  // hypot(15, 5) < 20
  CHECK(tags[3].range == RangeClass::Far);
  CHECK(tags[4].range == RangeClass::Near);  // 20 m boundary counts as near

  frame.vehicle_obs.visible_rays.pop_back();
  testutil::throws_with<std::invalid_argument>([&] { tag_difficulty(frame); },
                                               "does not cover");
}

TEST_CASE("union counts add the chosen sensors") {
  SceneFrame frame;
  frame.objects.resize(2);
  frame.vehicle_obs.visible_points = {3, 0};
  frame.infra_obs.resize(2);
  frame.infra_obs[0].visible_points = {1, 7};
  frame.infra_obs[1].visible_points = {0, 2};

  CHECK(union_visible_counts(frame, {-1}) == std::vector<int>{3, 0});
  CHECK(union_visible_counts(frame, {-1, 0}) == std::vector<int>{4, 7});
  CHECK(union_visible_counts(frame, {-1, 0, 1}) == std::vector<int>{4, 9});
  CHECK(union_visible_counts(frame, {}) == std::vector<int>{0, 0});

  testutil::throws_with<std::invalid_argument>(
      [&] { union_visible_counts(frame, {2}); }, "sensor index out of range");
  frame.infra_obs[1].visible_points.pop_back();
  testutil::throws_with<std::invalid_argument>(
      [&] { union_visible_counts(frame, {1}); }, "does not cover");
}

TEST_CASE("the measurement oracle emits covered cars and trucks only") {
  std::vector<SceneObject> objects = {
      object_at(4, ObjectClass::Car, 10, 0, 1.6, 3.9, 1.56, 0.2),
      object_at(7, ObjectClass::Truck, -8, 3, 1.9, 4.9, 2.05, 1.0),
      object_at(9, ObjectClass::Pedestrian, 2, 2, 0.6, 0.6, 1.7, 0.0),
  };
  const std::vector<int> counts = {5, 4, 100};

  const auto dets = oracle_detect(objects, counts, 5, 0.0, 11);
  REQUIRE(dets.size() == 1);  // truck under tau, pedestrian never emitted
  CHECK(dets[0].cls == ObjectClass::Car);
  CHECK(dets[0].score == 0.5);  // 5 / (5 + 5)
  CHECK(dets[0].box.center[0] == 10.0);  // zero noise copies the truth
  CHECK(dets[0].box.yaw == 0.2);

  const auto noisy = oracle_detect(objects, {9, 9, 9}, 3, 1.0, 11);
  REQUIRE(noisy.size() == 2);
  CHECK(noisy[0].score == 0.75);  // 9 / 12
  CHECK(noisy[0].box.center[0] != 10.0);
  CHECK(noisy[0].box.center[0] == doctest::Approx(10.0).epsilon(0.2));
  const auto noisy2 = oracle_detect(objects, {9, 9, 9}, 3, 1.0, 11);
  CHECK(noisy[0].box.center[0] == noisy2[0].box.center[0]);  // same stream
  const auto other_frame = oracle_detect(objects, {9, 9, 9}, 3, 1.0, 12);
  CHECK(noisy[0].box.center[0] != other_frame[0].box.center[0]);

  CHECK_THROWS_AS(oracle_detect(objects, {1, 2}, 5, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(oracle_detect(objects, counts, 0, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(oracle_detect(objects, counts, 5, -1.0, 1), std::invalid_argument);
}

TEST_CASE("the most helpful responder covers what the vehicle misses") {
  SceneFrame frame;
  frame.objects.resize(3);
  frame.vehicle_obs.visible_points = {10, 2, 0};  // objects 1, 2 under tau 5
  frame.infra_obs.resize(2);
  frame.infra_obs[0].visible_points = {50, 7, 0};   // 7 useful points
  frame.infra_obs[1].visible_points = {0, 3, 5};    // 8 useful points
  CHECK(oracle_best_infrastructure(frame, 5) == 1);

  frame.infra_obs[1].visible_points = {0, 3, 4};    // tie at 7
  CHECK(oracle_best_infrastructure(frame, 5) == 0);

  frame.vehicle_obs.visible_points = {10, 10, 10};  // nothing missing
  CHECK(oracle_best_infrastructure(frame, 5) == 0);

  SceneFrame lonely;
  lonely.objects.resize(1);
  lonely.vehicle_obs.visible_points = {0};
  CHECK(oracle_best_infrastructure(lonely, 5) == -1);

  CHECK_THROWS_AS(oracle_best_infrastructure(frame, 0), std::invalid_argument);
  frame.infra_obs[0].visible_points.pop_back();
  CHECK_THROWS_AS(oracle_best_infrastructure(frame, 5), std::invalid_argument);
}

TEST_CASE("scene sequences are deterministic and frame-addressable") {
  SceneConfig cfg;
  cfg.layout = "roundabout";
  cfg.frames = 5;
  cfg.infrastructures = 2;
  cfg.min_vehicles = 3;
  cfg.max_vehicles = 5;
  cfg.max_pedestrians = 1;
  cfg.lidar = coarse_lidar();

  const auto frames = generate_scene(cfg, 21);
  REQUIRE(frames.size() == 5);
  const auto again = generate_scene(cfg, 21);
  for (size_t f = 0; f < frames.size(); ++f) {
    CHECK(frames[f].frame_id == f);
    CHECK(frames[f].vehicle_pose.position == Vec3{0.0, 0.0, kVehicleSensorZ});
    CHECK(frames[f].vehicle_pose.yaw == 0.0);
    REQUIRE(frames[f].infra_poses.size() == 2);
    CHECK(frames[f].objects.size() >= 3);
    CHECK(frames[f].objects.size() <= 6);
    CHECK(frames[f].difficulty.size() == frames[f].objects.size());
    CHECK(frames[f].oracle_best >= 0);
    CHECK(frames[f].oracle_best < 2);
    REQUIRE(frames[f].infra_obs.size() == 2);

    CHECK(again[f].objects.size() == frames[f].objects.size());
    for (size_t i = 0; i < frames[f].objects.size(); ++i) {
      CHECK(again[f].objects[i].box.center == frames[f].objects[i].box.center);
      CHECK(again[f].objects[i].box.yaw == frames[f].objects[i].box.yaw);
    }
    CHECK(same_clouds(again[f].vehicle_obs.cloud, frames[f].vehicle_obs.cloud));
    CHECK(same_clouds(again[f].infra_obs[1].cloud, frames[f].infra_obs[1].cloud));
  }

  // per-frame substreams: a shorter run is a prefix of a longer one
  cfg.frames = 3;
  const auto prefix = generate_scene(cfg, 21);
  REQUIRE(prefix.size() == 3);
  for (size_t f = 0; f < 3; ++f) {
    CHECK(prefix[f].objects.size() == frames[f].objects.size());
    CHECK(same_clouds(prefix[f].vehicle_obs.cloud, frames[f].vehicle_obs.cloud));
  }

  cfg.frames = 0;
  CHECK(generate_scene(cfg, 21).empty());

  const auto poses = layout_infra_poses("roundabout", 2);
  CHECK(frames[0].infra_poses[0].position == poses[0].position);
  CHECK(frames[0].infra_poses[1].yaw == poses[1].yaw);
}

TEST_CASE("the occlusion stage builds the wall, the cluster and the poles") {
  SceneConfig cfg;
  cfg.layout = "occlusion_heavy";
  cfg.frames = 8;
  cfg.infrastructures = 3;
  cfg.lidar = coarse_lidar();
  cfg.infra_max_range = 12.0;

  const auto frames = generate_scene(cfg, 3);
  const auto poles = layout_infra_poses("occlusion_heavy", 3);
  REQUIRE(frames.size() == 8);
  for (const auto& frame : frames) {
    // five fixed trucks form the wall at x = 9.5, turned sideways
    int trucks = 0;
    for (const auto& obj : frame.objects) {
      if (obj.cls != ObjectClass::Truck) continue;
      ++trucks;
      CHECK(obj.box.center[0] == 9.5);
      CHECK(obj.box.yaw == kPi / 2.0);
      CHECK(obj.box.width == 1.9);  // fixed furniture takes no size jitter
    }
    CHECK(trucks == 5);

    // the hidden cluster parks on the slot grid around one pole
    int hidden = 0;
    std::set<int> zones;
    for (const auto& obj : frame.objects) {
      if (obj.cls != ObjectClass::Car) continue;
      if (std::fabs(obj.box.center[0] - 26.0) > 6.0) continue;
      ++hidden;
      for (int z = 0; z < 3; ++z)
        if (std::fabs(obj.box.center[1] - (18.0 - 18.0 * z)) < 4.5) zones.insert(z);
    }
    CHECK(hidden >= 4);
    CHECK(hidden <= 6);
    CHECK(zones.size() == 1);  // one zone per frame, never straddling

    // shared traffic stays on the vehicle's side of the wall
    for (const auto& obj : frame.objects) {
      if (obj.cls == ObjectClass::Pedestrian)
        CHECK(obj.box.center[0] <= 4.5);
    }

    // responder clouds obey the short mounting range
    for (size_t k = 0; k < 3; ++k) {
      for (const auto& p : frame.infra_obs[k].cloud)
        CHECK(std::hypot(p.x, p.y) <= 12.0 + 1e-6);
    }

    // placement keeps every object clear of the sensors
    for (const auto& obj : frame.objects) {
      const double halfdiag = 0.5 * std::hypot(obj.box.width, obj.box.length);
      CHECK(std::hypot(obj.box.center[0], obj.box.center[1]) >= 2.5 + halfdiag);
      for (const auto& pole : poles) {
        CHECK(std::hypot(obj.box.center[0] - pole.position[0],
                         obj.box.center[1] - pole.position[1]) >= 1.0 + halfdiag);
      }
    }

    CHECK(frame.oracle_best >= 0);
    CHECK(frame.oracle_best < 3);
  }
}

}  // TEST_SUITE
