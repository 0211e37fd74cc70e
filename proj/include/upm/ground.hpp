// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "upm/ingest.hpp"

namespace upm {

/// Plane n . p + d = 0 with a unit normal pointing up (camera -y).
struct GroundPlane {
  Vec3 normal{0.0, -1.0, 0.0};
  double offset = 1.65;
  double inlier_threshold = 0.15;

  double signed_distance(const Vec3& p) const { return normal.dot(p) + offset; }
  /// Height of the plane below the camera at (x, z): solves for y.
  double y_at(double x, double z) const;
};

struct RansacParams {
  int iterations = 200;
  double threshold = 0.15;
  std::uint64_t seed = 0;
  double height_prior = 1.65;  // expected ground y in the camera frame
  double prior_band = 0.5;     // candidate filter half-width around the prior
};

/// Horizontal plane y = height, used when fitting is impossible.
GroundPlane prior_plane(double height, double threshold);

/// RANSAC over candidates within `prior_band` of the height prior, then a
/// least-squares refit on the inliers of the best hypothesis. Throws
/// InputError when fewer than 3 non-collinear candidates exist.
GroundPlane fit_ground(const PointCloud& cloud, const RansacParams& params);

/// Flags points with |n . p + d| <= inlier_threshold; never removes points.
PointCloud mask_ground(PointCloud cloud, const GroundPlane& plane);

}  // namespace upm
