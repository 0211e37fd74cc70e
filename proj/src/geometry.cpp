// SPDX-License-Identifier: Apache-2.0
#include "upm/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

namespace upm {

Vec3 Calibration::lidar_to_camera(const Vec3& p) const {
  return rect_rotation * (lidar_to_cam * p.homogeneous());
}

Vec3 Calibration::camera_to_lidar(const Vec3& p) const {
  const Vec3 unrect = rect_rotation.transpose() * p;
  const Mat3 rot = lidar_to_cam.leftCols<3>();
  return rot.inverse() * (unrect - lidar_to_cam.col(3));
}

Vec2 Calibration::project(const Vec3& p) const {
  const Vec3 h = cam_projection * p.homogeneous();
  return {h.x() / h.z(), h.y() / h.z()};
}

Calibration Calibration::pinhole(double f, double cx, double cy) {
  Calibration c;
  c.cam_projection << f, 0, cx, 0,  //
      0, f, cy, 0,                  //
      0, 0, 1, 0;
  c.rect_rotation.setIdentity();
  c.lidar_to_cam << 0, -1, 0, 0,  //
      0, 0, -1, 0,                //
      1, 0, 0, 0;
  return c;
}

bool is_valid(const Calibration& calib) {
  if (calib.cam_projection(0, 0) == 0.0 || calib.cam_projection(1, 1) == 0.0)
    return false;
  const Mat3 gram = calib.rect_rotation * calib.rect_rotation.transpose();
  return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-3 &&
         calib.cam_projection.allFinite() && calib.lidar_to_cam.allFinite();
}

double normalize_yaw(double yaw) {
  double a = std::remainder(yaw, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

Mat3 Box3D::rotation() const {
  Mat3 r;
  r.col(0) = axis_x();
  r.col(1) = axis_y();
  r.col(2) = axis_z();
  return r;
}

std::array<Vec3, 8> Box3D::corners() const {
  std::array<Vec3, 8> out;
  const Vec3 ax = axis_x() * half_extents.x();
  const Vec3 ay = axis_y() * half_extents.y();
  const Vec3 az = axis_z() * half_extents.z();
  for (int i = 0; i < 8; ++i) {
    const double sx = (i & 1) ? 1.0 : -1.0;
    const double sy = (i & 2) ? 1.0 : -1.0;
    const double sz = (i & 4) ? 1.0 : -1.0;
    out[i] = center + sx * ax + sy * ay + sz * az;
  }
  return out;
}

LocalCoords to_local(const Vec3& p, const Box3D& box) {
  const Vec3 d = p - box.center;
  return {d.dot(box.axis_x()), d.dot(box.axis_y()), d.dot(box.axis_z())};
}

Vec3 from_local(const LocalCoords& q, const Box3D& box) {
  return box.center + q.x * box.axis_x() + q.y * box.axis_y() +
         q.z * box.axis_z();
}

bool contains(const Vec3& p, const Box3D& box) {
  return inside_extents(to_local(p, box), box.half_extents);
}

std::optional<Rect2D> project_box_to_image(const Box3D& box,
                                           const Calibration& calib,
                                           ImageSize image) {
  constexpr double kMinDepth = 0.1;
  double u_lo = std::numeric_limits<double>::infinity();
  double v_lo = u_lo;
  double u_hi = -u_lo;
  double v_hi = -u_lo;
  for (const Vec3& c : box.corners()) {
    if (!(c.z() > kMinDepth)) return std::nullopt;
    const Vec2 uv = calib.project(c);
    u_lo = std::min(u_lo, uv.x());
    u_hi = std::max(u_hi, uv.x());
    v_lo = std::min(v_lo, uv.y());
    v_hi = std::max(v_hi, uv.y());
  }
  const double u_edge = image.width - 0.5;
  const double v_edge = image.height - 0.5;
  Rect2D r{std::clamp(u_lo, -0.5, u_edge), std::clamp(v_lo, -0.5, v_edge),
           std::clamp(u_hi, -0.5, u_edge), std::clamp(v_hi, -0.5, v_edge)};
  if (!(r.u_max > r.u_min) || !(r.v_max > r.v_min)) return std::nullopt;
  return r;
}

std::array<Vec2, 4> bev_footprint(const Box3D& box) {
  const Vec2 ax(std::cos(box.yaw), -std::sin(box.yaw));
  const Vec2 az(std::sin(box.yaw), std::cos(box.yaw));
  const Vec2 c(box.center.x(), box.center.z());
  const Vec2 hx = ax * box.half_extents.x();
  const Vec2 hz = az * box.half_extents.z();
  return {c + hx + hz, c - hx + hz, c - hx - hz, c + hx - hz};
}

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject,
                              const std::vector<Vec2>& clip) {
  std::vector<Vec2> out = subject;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    const Vec2 edge = b - a;
    std::vector<Vec2> in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2& p = in[i];
      const Vec2& q = in[(i + 1) % in.size()];
      const double sp = cross(edge, p - a);
      const double sq = cross(edge, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
  }
  return out;
}

double polygon_area(const std::vector<Vec2>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i)
    twice += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * std::abs(twice);
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto fa = bev_footprint(a);
  const auto fb = bev_footprint(b);
  return polygon_area(clip_convex({fa.begin(), fa.end()}, {fb.begin(), fb.end()}));
}

namespace {

double ratio(double inter, double area_a, double area_b) {
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double bev_area(const Box3D& b) {
  return 4.0 * b.half_extents.x() * b.half_extents.z();
}

}  // namespace

double iou_bev(const Box3D& a, const Box3D& b) {
  if (!(bev_area(a) > 0.0) || !(bev_area(b) > 0.0)) return 0.0;
  return ratio(bev_intersection_area(a, b), bev_area(a), bev_area(b));
}

double iou_3d(const Box3D& a, const Box3D& b) {
  if (!(a.volume() > 0.0) || !(b.volume() > 0.0)) return 0.0;
  const double lo = std::max(a.center.y() - a.half_extents.y(),
                             b.center.y() - b.half_extents.y());
  const double hi = std::min(a.center.y() + a.half_extents.y(),
                             b.center.y() + b.half_extents.y());
  if (!(hi > lo)) return 0.0;
  return ratio(bev_intersection_area(a, b) * (hi - lo), a.volume(), b.volume());
}

double iou_2d(const Rect2D& a, const Rect2D& b) {
  const double w = std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min);
  const double h = std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min);
  const double inter = (w > 0.0 && h > 0.0) ? w * h : 0.0;
  return ratio(inter, a.area(), b.area());
}

}  // namespace upm
