// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "upm/calibration.hpp"
#include "upm/geometry.hpp"
#include "upm/ingest.hpp"

namespace upm {

/// Front-view raster holding one 3D point per pixel.
struct XYZMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3> xyz;              // row-major
  std::vector<std::uint8_t> valid;    // 1 where a point was projected or filled
  std::vector<std::uint8_t> ground;   // ground flag of the stored point

  XYZMap() = default;
  XYZMap(int w, int h);

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }
  std::size_t valid_count() const;
};

/// H_c x H_c grid of map points sampled from a rectangle.
struct Patch {
  int size = 0;
  Rect2D source;
  std::vector<Vec3> points;          // row-major, size * size entries
  std::vector<std::uint8_t> ground;
};

/// Projects every point through the calibration; on pixel collisions the
/// smallest-depth point wins (first one on exact ties).
XYZMap build_xyz_map(const PointCloud& cloud, const Calibration& calib, ImageSize size);

/// Fills every invalid pixel from the nearest valid pixel (city-block
/// distance). Ties resolve by checking neighbours left, right, up, down,
/// ring by ring. Throws InputError when the map has no valid pixel.
XYZMap inpaint(const XYZMap& map);

/// Pixel coordinate of sample `s` of `n` uniformly spaced sample centers over
/// [lo, hi], clamped to [0, extent).
inline int sample_pixel(double lo, double hi, int s, int n, int extent) {
  const double c = lo + (s + 0.5) * (hi - lo) / n;
  const int p = pixel_index(c);
  return p < 0 ? 0 : (p >= extent ? extent - 1 : p);
}

/// Nearest-neighbour resampling of `rect` to an H_c x H_c patch.
Patch crop_resize(const XYZMap& map, const Rect2D& rect, int patch_size);

}  // namespace upm
