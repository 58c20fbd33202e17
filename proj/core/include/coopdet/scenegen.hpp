#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coopdet/geometry.hpp"
#include "coopdet/rpn.hpp"
#include "coopdet/types.hpp"

namespace coopdet {

enum class OcclusionClass { Easy, Moderate, Hard };
enum class RangeClass { Near, Far };

const char* occlusion_name(OcclusionClass c);
const char* range_name(RangeClass c);
OcclusionClass parse_occlusion(const std::string& s);
RangeClass parse_range(const std::string& s);

struct DifficultyTag {
  OcclusionClass occlusion = OcclusionClass::Easy;
  RangeClass range = RangeClass::Near;
};

struct SceneObject {
  int id = 0;
  ObjectClass cls = ObjectClass::Car;
  Box3D box;  // shared frame
};

// What one sensor saw. The cloud is in that sensor's own frame; per-object
// counters are indexed like SceneFrame::objects.
struct SensorObservation {
  PointCloud cloud;
  std::vector<int> visible_points;  // returns landing on each object
  std::vector<int> visible_rays;    // rays whose first hit is the object
  std::vector<int> potential_rays;  // rays that would hit it with nothing else around
};

struct SceneFrame {
  uint32_t frame_id = 0;
  Pose vehicle_pose;
  std::vector<Pose> infra_poses;
  std::vector<SceneObject> objects;
  SensorObservation vehicle_obs;
  std::vector<SensorObservation> infra_obs;
  std::vector<DifficultyTag> difficulty;  // per object, from the vehicle's view
  int oracle_best = -1;                   // most helpful responder, -1 if none exist
};

// Planar ray sweep with vertical sample stacking: rays march from the sensor
// at a fixed angular step, the nearest box along a ray absorbs it, and each
// absorbed ray yields max(1, round(height * samples_per_meter)) returns
// spread over the box height. No ground returns, no over-the-top visibility.
struct LidarParams {
  int rays = 900;                  // full circle
  double max_range = 120.0;        // planar meters
  double samples_per_meter = 2.0;  // vertical returns per meter of height
  void validate() const;
};

struct SceneConfig {
  std::string layout = "random";  // random | roundabout | t_junction | occlusion_heavy
  int frames = 100;
  int infrastructures = 3;
  int min_vehicles = 6;
  int max_vehicles = 12;
  int max_pedestrians = 2;
  double car_fraction = 0.8;      // rest of the vehicles are trucks
  double half_extent_x = 36.0;    // placement bounds around the vehicle
  double half_extent_y = 32.0;
  int placement_retries = 100;
  LidarParams lidar;
  double infra_max_range = 0.0;   // 0 = same as lidar.max_range
  int detect_tau = 5;             // oracle visibility threshold
  double noise_scale = 0.0;       // oracle box perturbation scale
  void validate() const;
};

// Fixed responder mounting poses for a layout. The vehicle always sits at
// the origin with zero yaw, so the shared frame and the vehicle frame agree.
std::vector<Pose> layout_infra_poses(const std::string& layout, int count);

// Ground plane sits at z = -2.56; sensors are mounted above it.
inline constexpr double kGroundZ = -2.56;
inline constexpr double kVehicleSensorZ = -0.76;
inline constexpr double kInfraSensorZ = -0.56;

// Deterministic scene sequence: frame f uses the substream fork(f) of the
// master seed, so any frame can be regenerated in isolation.
std::vector<SceneFrame> generate_scene(const SceneConfig& config, uint64_t seed);

// One sensor over one object set. `sensor_seed` drives the reflectance
// stream. The returned cloud is expressed in the sensor's own frame.
SensorObservation simulate_lidar(const std::vector<SceneObject>& objects,
                                 const Pose& sensor_pose, const Pose& vehicle_pose,
                                 const LidarParams& params, double max_range,
                                 uint64_t sensor_seed);

// Occlusion fraction from the vehicle sensor: 1 - visible/potential rays
// (1 when nothing could be seen at all). Easy below 1/3, Hard above 2/3.
// Range splits at 20 m planar center distance, boundary counts as Near.
std::vector<DifficultyTag> tag_difficulty(const SceneFrame& frame);

// Per-object sum of visible point counts over the given sensors
// (-1 = vehicle, otherwise infrastructure index).
std::vector<int> union_visible_counts(const SceneFrame& frame,
                                      const std::vector<int>& sensors);

// Measurement-model detector: every car or truck whose union count reaches
// tau is emitted with score count / (count + tau) and a box perturbed by a
// seeded Gaussian scaled by noise_scale (zero scale reproduces the truth
// exactly). The perturbation stream is forked per object id, so a frame's
// detections agree across policies no matter which sensors participated.
std::vector<Detection> oracle_detect(const std::vector<SceneObject>& objects,
                                     const std::vector<int>& union_counts, int tau,
                                     double noise_scale, uint64_t frame_seed);

// Which responder helps most: argmax over infrastructures of the summed
// visible points on objects the vehicle itself under-sees (count < tau).
// Ties break toward the lowest index; -1 when there are no responders.
int oracle_best_infrastructure(const SceneFrame& frame, int tau);

}  // namespace coopdet
