#include "coopdet/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace coopdet {

double normalize_yaw(double yaw) {
  double y = std::fmod(yaw, 2.0 * kPi);
  if (y <= -kPi) y += 2.0 * kPi;
  if (y > kPi) y -= 2.0 * kPi;
  return y;
}

std::array<Vec3, 8> Box3D::corners() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double hl = 0.5 * length, hw = 0.5 * width, hh = 0.5 * height;
  // Box-frame x runs along the heading, y to the left.
  const double lx[4] = {+hl, -hl, -hl, +hl};
  const double ly[4] = {+hw, +hw, -hw, -hw};
  std::array<Vec3, 8> out;
  for (int i = 0; i < 4; ++i) {
    const double wx = center[0] + c * lx[i] - s * ly[i];
    const double wy = center[1] + s * lx[i] + c * ly[i];
    out[i] = {wx, wy, center[2] - hh};
    out[i + 4] = {wx, wy, center[2] + hh};
  }
  return out;
}

std::array<std::array<double, 2>, 4> Box3D::bev_corners() const {
  const auto c8 = corners();
  std::array<std::array<double, 2>, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = {c8[i][0], c8[i][1]};
  return out;
}

void validate_box(const Box3D& box) {
  if (!(box.width > 0.0) || !(box.length > 0.0) || !(box.height > 0.0))
    throw std::invalid_argument("box extents must be strictly positive");
}

Box3D box_from_corners(const std::array<Vec3, 8>& corners) {
  Box3D box;
  Vec3 sum{0.0, 0.0, 0.0};
  for (const auto& c : corners)
    for (int k = 0; k < 3; ++k) sum[k] += c[k];
  for (int k = 0; k < 3; ++k) box.center[k] = sum[k] / 8.0;

  const double dx = corners[0][0] - corners[1][0];
  const double dy = corners[0][1] - corners[1][1];
  box.length = std::hypot(dx, dy);
  box.width = std::hypot(corners[1][0] - corners[2][0], corners[1][1] - corners[2][1]);
  box.height = corners[4][2] - corners[0][2];
  box.yaw = std::atan2(dy, dx);
  validate_box(box);
  return box;
}

Mat3 relative_rotation(double yaw_a, double yaw_b) {
  const double d = yaw_a - yaw_b;
  const double c = std::cos(d), s = std::sin(d);
  return Mat3{{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

Vec3 transform_point_to_vehicle(const Vec3& p, const Pose& from, const Pose& to) {
  const Mat3 r = relative_rotation(from.yaw, to.yaw);
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    out[i] = r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] +
             from.position[i] - to.position[i];
  }
  return out;
}

Vec3 transform_point_from_vehicle(const Vec3& p, const Pose& from, const Pose& to) {
  const Mat3 r = relative_rotation(from.yaw, to.yaw);
  Vec3 d{p[0] - from.position[0] + to.position[0],
         p[1] - from.position[1] + to.position[1],
         p[2] - from.position[2] + to.position[2]};
  Vec3 out;
  for (int i = 0; i < 3; ++i)  // transpose = inverse for a rotation
    out[i] = r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2];
  return out;
}

PointCloud transform_cloud_to_vehicle(const PointCloud& cloud, const Pose& from,
                                      const Pose& to) {
  PointCloud out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) {
    const Vec3 q = transform_point_to_vehicle({p.x, p.y, p.z}, from, to);
    out.push_back({q[0], q[1], q[2], p.r});
  }
  return out;
}

PointCloud transform_cloud_from_vehicle(const PointCloud& cloud, const Pose& from,
                                        const Pose& to) {
  PointCloud out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) {
    const Vec3 q = transform_point_from_vehicle({p.x, p.y, p.z}, from, to);
    out.push_back({q[0], q[1], q[2], p.r});
  }
  return out;
}

namespace {

using Vec2 = std::array<double, 2>;

double polygon_area(const std::vector<Vec2>& poly) {
  const size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    acc += a[0] * b[1] - b[0] * a[1];
  }
  return 0.5 * acc;
}

// One Sutherland-Hodgman pass: keep the part of `poly` left of edge a->b.
std::vector<Vec2> clip_edge(const std::vector<Vec2>& poly, const Vec2& a, const Vec2& b) {
  std::vector<Vec2> out;
  const size_t n = poly.size();
  if (n == 0) return out;
  const double ex = b[0] - a[0], ey = b[1] - a[1];
  auto side = [&](const Vec2& p) { return ex * (p[1] - a[1]) - ey * (p[0] - a[0]); };
  for (size_t i = 0; i < n; ++i) {
    const Vec2& cur = poly[i];
    const Vec2& prev = poly[(i + n - 1) % n];
    const double sc = side(cur), sp = side(prev);
    const bool cur_in = sc >= 0.0, prev_in = sp >= 0.0;
    if (cur_in != prev_in) {
      const double t = sp / (sp - sc);
      out.push_back({prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])});
    }
    if (cur_in) out.push_back(cur);
  }
  return out;
}

}  // namespace

double convex_intersection_area(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  std::vector<Vec2> poly = a;
  const size_t n = b.size();
  for (size_t i = 0; i < n && !poly.empty(); ++i)
    poly = clip_edge(poly, b[i], b[(i + 1) % n]);
  const double area = polygon_area(poly);
  return area > 0.0 ? area : 0.0;
}

namespace {

double bev_intersection(const Box3D& a, const Box3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  return convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
}

}  // namespace

double bev_iou(const Box3D& a, const Box3D& b) {
  validate_box(a);
  validate_box(b);
  const double inter = bev_intersection(a, b);
  const double area_a = a.width * a.length;
  const double area_b = b.width * b.length;
  const double uni = area_a + area_b - inter;
  return inter / uni;
}

double iou_3d(const Box3D& a, const Box3D& b) {
  validate_box(a);
  validate_box(b);
  const double inter_bev = bev_intersection(a, b);
  const double za0 = a.center[2] - 0.5 * a.height, za1 = a.center[2] + 0.5 * a.height;
  const double zb0 = b.center[2] - 0.5 * b.height, zb1 = b.center[2] + 0.5 * b.height;
  const double dz = std::min(za1, zb1) - std::max(za0, zb0);
  const double inter = dz > 0.0 ? inter_bev * dz : 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return inter / uni;
}

}  // namespace coopdet
