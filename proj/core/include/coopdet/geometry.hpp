#pragma once

#include <array>
#include <vector>

namespace coopdet {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi].
double normalize_yaw(double yaw);

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

// Rigid pose on the ground plane: position plus heading. Pitch and roll are
// always zero in this world, so one yaw angle is the whole orientation. Yaw
// is counter-clockwise about +z with zero along +x.
struct Pose {
  Vec3 position{0.0, 0.0, 0.0};  // meters
  double yaw = 0.0;              // radians
};

struct LidarPoint {
  double x = 0.0, y = 0.0, z = 0.0;  // meters, sensor frame
  double r = 0.0;                    // reflectance in [0, 1]
};
using PointCloud = std::vector<LidarPoint>;

// Oriented 3D box. The length extent runs along the heading axis (+x at yaw
// zero), width across it, height along +z. All extents must be positive.
struct Box3D {
  Vec3 center{0.0, 0.0, 0.0};
  double width = 1.0;
  double length = 1.0;
  double height = 1.0;
  double yaw = 0.0;

  double volume() const { return width * length * height; }
  // Corners in a fixed order: bottom face counter-clockwise starting at the
  // front-left corner (+l/2, +w/2 in box frame), then the top face in the
  // same x-y order.
  std::array<Vec3, 8> corners() const;
  // BEV footprint, counter-clockwise, same x-y order as corners().
  std::array<std::array<double, 2>, 4> bev_corners() const;
};

// Throws std::invalid_argument unless all extents are strictly positive.
void validate_box(const Box3D& box);

// Reconstructs the box from corners() output. Exact up to floating rounding.
Box3D box_from_corners(const std::array<Vec3, 8>& corners);

// Planar rotation by (yaw_a - yaw_b) about +z, embedded in 3D.
Mat3 relative_rotation(double yaw_a, double yaw_b);

// Maps a point observed by sensor `from` into the frame of agent `to`:
// rotate by the heading difference, then shift by the difference of the two
// mount positions, p' = R(a_from - a_to) p + (C_from - C_to).
Vec3 transform_point_to_vehicle(const Vec3& p, const Pose& from, const Pose& to);
// Exact inverse of transform_point_to_vehicle (same argument order):
// p = R(a_from - a_to)^T (p' - C_from + C_to).
Vec3 transform_point_from_vehicle(const Vec3& p, const Pose& from, const Pose& to);

PointCloud transform_cloud_to_vehicle(const PointCloud& cloud, const Pose& from,
                                      const Pose& to);
PointCloud transform_cloud_from_vehicle(const PointCloud& cloud, const Pose& from,
                                        const Pose& to);

// Intersection area of two convex polygons given counter-clockwise.
double convex_intersection_area(const std::vector<std::array<double, 2>>& a,
                                const std::vector<std::array<double, 2>>& b);

// Birds-eye-view IoU of the two footprints. Throws on degenerate boxes.
double bev_iou(const Box3D& a, const Box3D& b);
// Volumetric IoU: BEV intersection times vertical overlap over union volume.
double iou_3d(const Box3D& a, const Box3D& b);

}  // namespace coopdet
