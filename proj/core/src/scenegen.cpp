#include "coopdet/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "coopdet/rng.hpp"

namespace coopdet {

const char* occlusion_name(OcclusionClass c) {
  switch (c) {
    case OcclusionClass::Easy: return "easy";
    case OcclusionClass::Moderate: return "moderate";
    case OcclusionClass::Hard: return "hard";
  }
  return "?";
}

const char* range_name(RangeClass c) {
  return c == RangeClass::Near ? "near" : "far";
}

OcclusionClass parse_occlusion(const std::string& s) {
  if (s == "easy") return OcclusionClass::Easy;
  if (s == "moderate") return OcclusionClass::Moderate;
  if (s == "hard") return OcclusionClass::Hard;
  throw std::invalid_argument("unknown occlusion class: " + s);
}

RangeClass parse_range(const std::string& s) {
  if (s == "near") return RangeClass::Near;
  if (s == "far") return RangeClass::Far;
  throw std::invalid_argument("unknown range class: " + s);
}

void LidarParams::validate() const {
  if (rays < 4) throw std::invalid_argument("need at least 4 lidar rays");
  if (!(max_range > 0.0)) throw std::invalid_argument("lidar range must be positive");
  if (!(samples_per_meter > 0.0))
    throw std::invalid_argument("vertical sample density must be positive");
}

void SceneConfig::validate() const {
  if (frames < 0) throw std::invalid_argument("negative frame count");
  if (infrastructures < 0) throw std::invalid_argument("negative responder count");
  if (min_vehicles < 0 || max_vehicles < min_vehicles)
    throw std::invalid_argument("vehicle count range is inverted");
  if (max_pedestrians < 0) throw std::invalid_argument("negative pedestrian cap");
  if (max_vehicles + max_pedestrians > 60)
    throw std::invalid_argument("at most 60 objects per frame");
  if (!(car_fraction >= 0.0 && car_fraction <= 1.0))
    throw std::invalid_argument("car fraction must lie in [0, 1]");
  if (!(half_extent_x > 0.0) || !(half_extent_y > 0.0))
    throw std::invalid_argument("placement extents must be positive");
  if (placement_retries < 1) throw std::invalid_argument("need at least one retry");
  lidar.validate();
  if (infra_max_range < 0.0)
    throw std::invalid_argument("responder range cannot be negative");
  if (detect_tau < 1) throw std::invalid_argument("tau must be at least 1");
  if (noise_scale < 0.0) throw std::invalid_argument("noise scale cannot be negative");
  if (layout == "occlusion_heavy" && infrastructures != 3)
    throw std::invalid_argument("occlusion_heavy expects exactly 3 responders");
  if (layout != "random" && layout != "roundabout" && layout != "t_junction" &&
      layout != "occlusion_heavy")
    throw std::invalid_argument("unknown layout: " + layout);
}

std::vector<Pose> layout_infra_poses(const std::string& layout, int count) {
  std::vector<Pose> poses;
  auto facing_origin = [](double x, double y) {
    Pose p;
    p.position = {x, y, kInfraSensorZ};
    p.yaw = std::atan2(-y, -x);
    return p;
  };
  if (layout == "random") {
    for (int k = 0; k < count; ++k) {
      const double a = kPi / 2.0 + 2.0 * kPi * k / std::max(1, count);
      poses.push_back(facing_origin(26.0 * std::cos(a), 26.0 * std::sin(a)));
    }
  } else if (layout == "roundabout") {
    for (int k = 0; k < count; ++k) {
      const double a = kPi / 6.0 + 2.0 * kPi * k / std::max(1, count);
      poses.push_back(facing_origin(22.0 * std::cos(a), 22.0 * std::sin(a)));
    }
  } else if (layout == "t_junction") {
    if (count == 1) {
      poses.push_back(facing_origin(0.0, 12.0));
    } else {
      for (int k = 0; k < count; ++k) {
        const double x = -16.0 + 32.0 * k / (count - 1);
        poses.push_back(facing_origin(x, 12.0));
      }
    }
  } else if (layout == "occlusion_heavy") {
    for (int k = 0; k < count; ++k)
      poses.push_back(facing_origin(26.0, 18.0 - 18.0 * k));
  } else {
    throw std::invalid_argument("unknown layout: " + layout);
  }
  return poses;
}

namespace {

struct SizeSpec {
  double w, l, h;
};

constexpr SizeSpec kCarSize{1.6, 3.9, 1.56};
constexpr SizeSpec kTruckSize{1.9, 4.9, 2.05};
constexpr SizeSpec kPedSize{0.6, 0.6, 1.7};

Box3D make_box(const SizeSpec& base, double x, double y, double yaw, SplitMix64* jitter) {
  Box3D box;
  const double jw = jitter ? jitter->uniform(0.95, 1.05) : 1.0;
  const double jl = jitter ? jitter->uniform(0.95, 1.05) : 1.0;
  const double jh = jitter ? jitter->uniform(0.95, 1.05) : 1.0;
  box.width = base.w * jw;
  box.length = base.l * jl;
  box.height = base.h * jh;
  box.center = {x, y, kGroundZ + box.height / 2.0};
  box.yaw = yaw;
  return box;
}

bool placement_ok(const Box3D& box, const std::vector<SceneObject>& placed,
                  const SceneConfig& cfg, const std::vector<Pose>& sensors) {
  for (const auto& c : box.corners()) {
    if (std::fabs(c[0]) > cfg.half_extent_x || std::fabs(c[1]) > cfg.half_extent_y)
      return false;
  }
  for (size_t i = 0; i < sensors.size(); ++i) {
    // The vehicle sensor sits on the ego car, a pole needs far less standoff.
    const double standoff = i == 0 ? 2.5 : 1.0;
    const auto& s = sensors[i];
    if (std::hypot(box.center[0] - s.position[0], box.center[1] - s.position[1]) <
        standoff + 0.5 * std::hypot(box.width, box.length))
      return false;
  }
  const auto mine = box.bev_corners();
  for (const auto& other : placed) {
    if (std::fabs(other.box.center[0] - box.center[0]) > 10.0 ||
        std::fabs(other.box.center[1] - box.center[1]) > 10.0)
      continue;
    const auto theirs = other.box.bev_corners();
    if (convex_intersection_area({mine.begin(), mine.end()},
                                 {theirs.begin(), theirs.end()}) > 1e-9)
      return false;
  }
  return true;
}

void place_or_throw(SceneObject obj, std::vector<SceneObject>& objects,
                    const SceneConfig& cfg, const std::vector<Pose>& sensors) {
  if (!placement_ok(obj.box, objects, cfg, sensors))
    throw std::runtime_error("fixed scene furniture does not fit the bounds");
  objects.push_back(std::move(obj));
}

// Rejection-sample a box inside [x0,x1]x[y0,y1] until it sits clear of
// everything already placed.
SceneObject sample_object(int id, ObjectClass cls, const SizeSpec& base, double x0,
                          double x1, double y0, double y1, SplitMix64& rng,
                          const std::vector<SceneObject>& placed,
                          const SceneConfig& cfg, const std::vector<Pose>& sensors) {
  for (int attempt = 0; attempt < cfg.placement_retries; ++attempt) {
    const double x = rng.uniform(x0, x1);
    const double y = rng.uniform(y0, y1);
    const double yaw = rng.uniform(0.0, 2.0 * kPi);
    const Box3D box = make_box(base, x, y, normalize_yaw(yaw), &rng);
    if (placement_ok(box, placed, cfg, sensors)) {
      SceneObject obj;
      obj.id = id;
      obj.cls = cls;
      obj.box = box;
      return obj;
    }
  }
  char msg[128];
  std::snprintf(msg, sizeof(msg),
                "could not place a %s in [%g,%g]x[%g,%g] after %d retries",
                class_name(cls), x0, x1, y0, y1, cfg.placement_retries);
  throw std::runtime_error(msg);
}

struct RaySlabHit {
  bool hit = false;
  double t = 0.0;
};

RaySlabHit ray_box_bev(double sx, double sy, double dx, double dy, const Box3D& box) {
  // Move the ray into the box frame, then slab-test the axis-aligned extent.
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double rx = sx - box.center[0], ry = sy - box.center[1];
  const double ox = c * rx + s * ry, oy = -s * rx + c * ry;
  const double ux = c * dx + s * dy, uy = -s * dx + c * dy;
  const double half[2] = {box.length / 2.0, box.width / 2.0};
  const double o[2] = {ox, oy}, u[2] = {ux, uy};
  double t_enter = 0.0, t_exit = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    if (std::fabs(u[axis]) < 1e-12) {
      if (std::fabs(o[axis]) > half[axis]) return {};
      continue;
    }
    double t0 = (-half[axis] - o[axis]) / u[axis];
    double t1 = (half[axis] - o[axis]) / u[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_exit <= 1e-9) return {};
  return {true, std::max(t_enter, 1e-9)};
}

}  // namespace

SensorObservation simulate_lidar(const std::vector<SceneObject>& objects,
                                 const Pose& sensor_pose, const Pose& vehicle_pose,
                                 const LidarParams& params, double max_range,
                                 uint64_t sensor_seed) {
  params.validate();
  if (!(max_range > 0.0)) throw std::invalid_argument("sensor range must be positive");
  SensorObservation obs;
  obs.visible_points.assign(objects.size(), 0);
  obs.visible_rays.assign(objects.size(), 0);
  obs.potential_rays.assign(objects.size(), 0);

  SplitMix64 rng(sensor_seed);
  const double sx = sensor_pose.position[0], sy = sensor_pose.position[1];

  for (int j = 0; j < params.rays; ++j) {
    const double theta = 2.0 * kPi * (j + 0.5) / params.rays;
    const double dx = std::cos(theta), dy = std::sin(theta);
    double best_t = std::numeric_limits<double>::infinity();
    int best = -1;
    for (size_t i = 0; i < objects.size(); ++i) {
      const RaySlabHit hit = ray_box_bev(sx, sy, dx, dy, objects[i].box);
      if (!hit.hit || hit.t > max_range) continue;
      obs.potential_rays[i] += 1;
      if (hit.t < best_t) {
        best_t = hit.t;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) continue;
    obs.visible_rays[best] += 1;

    const Box3D& box = objects[best].box;
    const int n_v = std::max(
        1, static_cast<int>(std::lround(box.height * params.samples_per_meter)));
    const double hx = sx + best_t * dx, hy = sy + best_t * dy;
    const double z0 = box.center[2] - box.height / 2.0;
    for (int k = 0; k < n_v; ++k) {
      const double z = z0 + (k + 0.5) * box.height / n_v;
      const double refl = rng.uniform(0.05, 1.0);
      const Vec3 world{hx, hy, z};
      // Stored in the sensor's frame; mapping the cloud back with the
      // shared-frame transform reproduces these world coordinates exactly.
      const Vec3 local = transform_point_from_vehicle(world, sensor_pose, vehicle_pose);
      obs.cloud.push_back({local[0], local[1], local[2], refl});
    }
    obs.visible_points[best] += n_v;
  }
  return obs;
}

std::vector<DifficultyTag> tag_difficulty(const SceneFrame& frame) {
  const auto& obs = frame.vehicle_obs;
  if (obs.visible_rays.size() != frame.objects.size() ||
      obs.potential_rays.size() != frame.objects.size())
    throw std::invalid_argument("vehicle observation does not cover the objects");
  std::vector<DifficultyTag> tags(frame.objects.size());
  for (size_t i = 0; i < frame.objects.size(); ++i) {
    const int pot = obs.potential_rays[i];
    const double occluded =
        pot > 0 ? 1.0 - static_cast<double>(obs.visible_rays[i]) / pot : 1.0;
    DifficultyTag tag;
    if (occluded < 1.0 / 3.0) tag.occlusion = OcclusionClass::Easy;
    else if (occluded <= 2.0 / 3.0) tag.occlusion = OcclusionClass::Moderate;
    else tag.occlusion = OcclusionClass::Hard;
    const double dist = std::hypot(
        frame.objects[i].box.center[0] - frame.vehicle_pose.position[0],
        frame.objects[i].box.center[1] - frame.vehicle_pose.position[1]);
    tag.range = dist <= 20.0 ? RangeClass::Near : RangeClass::Far;
    tags[i] = tag;
  }
  return tags;
}

std::vector<int> union_visible_counts(const SceneFrame& frame,
                                      const std::vector<int>& sensors) {
  std::vector<int> counts(frame.objects.size(), 0);
  for (int s : sensors) {
    const SensorObservation* obs = nullptr;
    if (s == -1) {
      obs = &frame.vehicle_obs;
    } else if (s >= 0 && s < static_cast<int>(frame.infra_obs.size())) {
      obs = &frame.infra_obs[static_cast<size_t>(s)];
    } else {
      throw std::invalid_argument("sensor index out of range: " + std::to_string(s));
    }
    if (obs->visible_points.size() != frame.objects.size())
      throw std::invalid_argument("observation does not cover the objects");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += obs->visible_points[i];
  }
  return counts;
}

std::vector<Detection> oracle_detect(const std::vector<SceneObject>& objects,
                                     const std::vector<int>& union_counts, int tau,
                                     double noise_scale, uint64_t frame_seed) {
  if (union_counts.size() != objects.size())
    throw std::invalid_argument("one union count per object required");
  if (tau < 1) throw std::invalid_argument("tau must be at least 1");
  if (noise_scale < 0.0) throw std::invalid_argument("negative noise scale");

  const SplitMix64 base(frame_seed);
  std::vector<Detection> dets;
  for (size_t i = 0; i < objects.size(); ++i) {
    const SceneObject& obj = objects[i];
    if (obj.cls == ObjectClass::Pedestrian) continue;  // not a detector class
    if (union_counts[i] < tau) continue;
    Detection det;
    det.cls = obj.cls;
    det.score = static_cast<double>(union_counts[i]) /
                static_cast<double>(union_counts[i] + tau);
    det.box = obj.box;
    if (noise_scale > 0.0) {
      SplitMix64 rng = base.fork(static_cast<uint64_t>(obj.id));
      det.box.center[0] += noise_scale * 0.1 * rng.normal();
      det.box.center[1] += noise_scale * 0.1 * rng.normal();
      det.box.center[2] += noise_scale * 0.05 * rng.normal();
      det.box.width *= std::exp(noise_scale * 0.03 * rng.normal());
      det.box.length *= std::exp(noise_scale * 0.03 * rng.normal());
      det.box.height *= std::exp(noise_scale * 0.03 * rng.normal());
      det.box.yaw = normalize_yaw(det.box.yaw + noise_scale * 0.05 * rng.normal());
    }
    dets.push_back(det);
  }
  return dets;
}

int oracle_best_infrastructure(const SceneFrame& frame, int tau) {
  if (tau < 1) throw std::invalid_argument("tau must be at least 1");
  const int n = static_cast<int>(frame.infra_obs.size());
  if (n == 0) return -1;
  int best = 0;
  long best_sum = -1;
  for (int k = 0; k < n; ++k) {
    const auto& obs = frame.infra_obs[static_cast<size_t>(k)];
    if (obs.visible_points.size() != frame.objects.size())
      throw std::invalid_argument("observation does not cover the objects");
    long sum = 0;
    for (size_t i = 0; i < frame.objects.size(); ++i) {
      if (frame.vehicle_obs.visible_points[i] < tau)
        sum += obs.visible_points[i];
    }
    if (sum > best_sum) {
      best_sum = sum;
      best = k;
    }
  }
  return best;
}

namespace {

void build_random_objects(const SceneConfig& cfg, SplitMix64& rng,
                          const std::vector<Pose>& sensors,
                          std::vector<SceneObject>& objects) {
  const int n_veh =
      cfg.min_vehicles +
      static_cast<int>(rng.uniform_index(cfg.max_vehicles - cfg.min_vehicles + 1));
  const double x1 = cfg.half_extent_x - 4.0, y1 = cfg.half_extent_y - 4.0;
  int id = 0;
  for (int i = 0; i < n_veh; ++i) {
    const bool car = rng.next_double() < cfg.car_fraction;
    objects.push_back(sample_object(id++, car ? ObjectClass::Car : ObjectClass::Truck,
                                    car ? kCarSize : kTruckSize, -x1, x1, -y1, y1,
                                    rng, objects, cfg, sensors));
  }
  const int n_ped =
      cfg.max_pedestrians > 0
          ? static_cast<int>(rng.uniform_index(cfg.max_pedestrians + 1))
          : 0;
  for (int i = 0; i < n_ped; ++i) {
    objects.push_back(sample_object(id++, ObjectClass::Pedestrian, kPedSize, -x1, x1,
                                    -y1, y1, rng, objects, cfg, sensors));
  }
}

// A wall of trucks hides three side-by-side zones behind it; a cluster of
// cars spawns in a zone picked per frame, which only the responder parked
// over that zone can see. Built so the local view alone always misses the
// cluster.
void build_occlusion_heavy(const SceneConfig& cfg, SplitMix64& rng,
                           const std::vector<Pose>& sensors,
                           std::vector<SceneObject>& objects, int* zone_out) {
  int id = 0;
  for (int k = 0; k < 5; ++k) {
    SceneObject truck;
    truck.id = id++;
    truck.cls = ObjectClass::Truck;
    truck.box = make_box(kTruckSize, 9.5, -9.8 + 4.9 * k, kPi / 2.0, nullptr);
    place_or_throw(std::move(truck), objects, cfg, sensors);
  }

  const int zone = static_cast<int>(rng.uniform_index(3));
  if (zone_out) *zone_out = zone;
  const double zone_y = 18.0 - 18.0 * zone;
  // Parking grid around the responder pole at (26, zone_y): two rows of
  // three slots, shuffled and jittered per frame. Fixed slots rather than
  // rejection sampling — six random poses do not fit a zone this tight.
  static constexpr double kSlotDx[3] = {-5.2, 0.0, 5.2};
  static constexpr double kSlotDy[2] = {-3.6, 3.6};
  int slot_order[6] = {0, 1, 2, 3, 4, 5};
  const int n_hidden = 4 + static_cast<int>(rng.uniform_index(3));
  for (int i = 0; i < n_hidden; ++i) {
    const int j = i + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(6 - i)));
    std::swap(slot_order[i], slot_order[j]);
  }
  for (int i = 0; i < n_hidden; ++i) {
    const int slot = slot_order[i];
    const double x = 26.0 + kSlotDx[slot % 3] + rng.uniform(-0.3, 0.3);
    const double y = zone_y + kSlotDy[slot / 3] + rng.uniform(-0.25, 0.25);
    const double facing = rng.next_double() < 0.5 ? 0.0 : kPi;
    const double yaw = normalize_yaw(facing + rng.uniform(-0.15, 0.15));
    SceneObject car;
    car.id = id++;
    car.cls = ObjectClass::Car;
    car.box = make_box(kCarSize, x, y, yaw, &rng);
    place_or_throw(std::move(car), objects, cfg, sensors);
  }

  const int n_common = 4 + static_cast<int>(rng.uniform_index(3));
  for (int i = 0; i < n_common; ++i) {
    objects.push_back(sample_object(id++, ObjectClass::Car, kCarSize, -20.0, 4.0,
                                    -18.0, 18.0, rng, objects, cfg, sensors));
  }
  const int n_ped = static_cast<int>(rng.uniform_index(3));
  for (int i = 0; i < n_ped; ++i) {
    objects.push_back(sample_object(id++, ObjectClass::Pedestrian, kPedSize, -20.0,
                                    4.0, -18.0, 18.0, rng, objects, cfg, sensors));
  }
}

}  // namespace

std::vector<SceneFrame> generate_scene(const SceneConfig& config, uint64_t seed) {
  config.validate();
  const SplitMix64 root(seed);
  const std::vector<Pose> infra =
      layout_infra_poses(config.layout, config.infrastructures);
  const double infra_range =
      config.infra_max_range > 0.0 ? config.infra_max_range : config.lidar.max_range;

  std::vector<SceneFrame> frames;
  frames.reserve(static_cast<size_t>(config.frames));
  for (int f = 0; f < config.frames; ++f) {
    const SplitMix64 frame_base = root.fork(static_cast<uint64_t>(f));
    SplitMix64 place_rng = frame_base.fork(1);

    SceneFrame frame;
    frame.frame_id = static_cast<uint32_t>(f);
    frame.vehicle_pose.position = {0.0, 0.0, kVehicleSensorZ};
    frame.vehicle_pose.yaw = 0.0;
    frame.infra_poses = infra;

    std::vector<Pose> sensors;
    sensors.push_back(frame.vehicle_pose);
    sensors.insert(sensors.end(), infra.begin(), infra.end());

    if (config.layout == "occlusion_heavy")
      build_occlusion_heavy(config, place_rng, sensors, frame.objects, nullptr);
    else
      build_random_objects(config, place_rng, sensors, frame.objects);

    frame.vehicle_obs =
        simulate_lidar(frame.objects, frame.vehicle_pose, frame.vehicle_pose,
                       config.lidar, config.lidar.max_range,
                       frame_base.fork(2).state());
    for (size_t k = 0; k < infra.size(); ++k) {
      frame.infra_obs.push_back(
          simulate_lidar(frame.objects, infra[k], frame.vehicle_pose, config.lidar,
                         infra_range, frame_base.fork(3 + k).state()));
    }

    frame.difficulty = tag_difficulty(frame);
    frame.oracle_best = oracle_best_infrastructure(frame, config.detect_tau);
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace coopdet
