// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "upm/calibration.hpp"
#include "upm/common.hpp"

namespace upm {

/// Wraps an angle into (-pi, pi].
double normalize_yaw(double yaw);

/// Oriented box in the camera frame. The box rotates about the vertical
/// (camera y) axis; yaw = 0 puts the long axis along camera x, matching
/// KITTI rotation_y.
struct Box3D {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();  // (l_x, l_y, l_z)
  double yaw = 0.0;

  Vec3 axis_x() const { return {std::cos(yaw), 0.0, -std::sin(yaw)}; }
  Vec3 axis_y() const { return {0.0, 1.0, 0.0}; }
  Vec3 axis_z() const { return {std::sin(yaw), 0.0, std::cos(yaw)}; }

  /// Rotation whose columns are the local axes.
  Mat3 rotation() const;
  std::array<Vec3, 8> corners() const;
  double volume() const {
    return 8.0 * half_extents.x() * half_extents.y() * half_extents.z();
  }
};

/// A point expressed in a box's local frame.
struct LocalCoords {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Axis-aligned pixel rectangle in continuous image coordinates.
struct Rect2D {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  double width() const { return u_max - u_min; }
  double height() const { return v_max - v_min; }
  double area() const {
    return width() > 0.0 && height() > 0.0 ? width() * height() : 0.0;
  }
};

LocalCoords to_local(const Vec3& p, const Box3D& box);
Vec3 from_local(const LocalCoords& q, const Box3D& box);

/// Strict containment: points on a face are outside.
inline bool inside_extents(const LocalCoords& q, const Vec3& half) {
  return std::abs(q.x) < half.x() && std::abs(q.y) < half.y() &&
         std::abs(q.z) < half.z();
}

bool contains(const Vec3& p, const Box3D& box);

/// Pixel bounding rectangle of the eight projected corners, clamped to the
/// image. Empty when any corner is within 0.1 m of the image plane or the
/// rectangle misses the image entirely.
std::optional<Rect2D> project_box_to_image(const Box3D& box,
                                           const Calibration& calib,
                                           ImageSize image);

/// Bird's-eye-view footprint (x, z) in counter-clockwise order.
std::array<Vec2, 4> bev_footprint(const Box3D& box);

/// Intersection polygon of two convex counter-clockwise polygons.
std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject,
                              const std::vector<Vec2>& clip);
double polygon_area(const std::vector<Vec2>& poly);

double bev_intersection_area(const Box3D& a, const Box3D& b);
double iou_bev(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);
double iou_2d(const Rect2D& a, const Rect2D& b);

}  // namespace upm
