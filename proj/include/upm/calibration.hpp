// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "upm/common.hpp"

namespace upm {

struct ImageSize {
  int width = 1242;
  int height = 375;
};

/// KITTI-style sensor calibration. All downstream modules work in the
/// rectified camera frame: x right, y down, z forward.
struct Calibration {
  Mat34 cam_projection = Mat34::Identity();  // P2
  Mat3 rect_rotation = Mat3::Identity();     // R0_rect
  Mat34 lidar_to_cam = Mat34::Identity();    // Tr_velo_to_cam

  /// Left 3x3 block of the projection matrix.
  Mat3 intrinsics() const { return cam_projection.leftCols<3>(); }

  Vec3 lidar_to_camera(const Vec3& p) const;
  Vec3 camera_to_lidar(const Vec3& p) const;

  /// Projects a camera-frame point to continuous pixel coordinates. Pixel
  /// (col, row) has its center at integer coordinates (col, row).
  Vec2 project(const Vec3& p) const;

  /// Pinhole camera with focal length f and principal point (cx, cy), the
  /// standard KITTI axis permutation as the LiDAR extrinsic, identity R0.
  static Calibration pinhole(double f, double cx, double cy);
};

/// Checks the type invariants: nonzero focal terms and an orthonormal
/// rectification rotation (within 1e-3).
bool is_valid(const Calibration& calib);

/// Index of the pixel whose center is nearest to a continuous coordinate.
inline int pixel_index(double coord) {
  return static_cast<int>(std::floor(coord + 0.5));
}

}  // namespace upm
