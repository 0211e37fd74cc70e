// SPDX-License-Identifier: Apache-2.0
#include "upm/frontview.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>

namespace upm {

XYZMap::XYZMap(int w, int h)
    : width(w),
      height(h),
      xyz(static_cast<std::size_t>(w) * h, Vec3::Zero()),
      valid(static_cast<std::size_t>(w) * h, 0),
      ground(static_cast<std::size_t>(w) * h, 0) {}

std::size_t XYZMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

XYZMap build_xyz_map(const PointCloud& cloud, const Calibration& calib, ImageSize size) {
  if (size.width <= 0 || size.height <= 0) throw InputError("map size must be positive");
  XYZMap map(size.width, size.height);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    if (!(p.z() > 0.0)) continue;
    const Vec2 uv = calib.project(p);
    if (!std::isfinite(uv.x()) || !std::isfinite(uv.y())) continue;
    const int col = pixel_index(uv.x());
    const int row = pixel_index(uv.y());
    if (col < 0 || row < 0 || col >= size.width || row >= size.height) continue;
    const std::size_t k = map.index(row, col);
    if (map.valid[k] && !(p.z() < map.xyz[k].z())) continue;
    map.xyz[k] = p;
    map.valid[k] = 1;
    map.ground[k] = (i < cloud.ground_mask.size() && cloud.ground_mask[i]) ? 1 : 0;
  }
  return map;
}

XYZMap inpaint(const XYZMap& map) {
  const std::size_t n = map.xyz.size();
  std::vector<std::size_t> frontier;
  std::vector<int> dist(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    if (map.valid[k]) {
      dist[k] = 0;
      frontier.push_back(k);
    }
  }
  if (frontier.empty()) throw InputError("cannot inpaint a map without valid pixels");
  XYZMap out = map;
  if (frontier.size() == n) return out;

  const int w = map.width;
  const int h = map.height;
  // Breadth-first rings. A pixel at ring d copies from the first neighbour
  // (left, right, up, down) that sits on ring d - 1.
  std::vector<std::size_t> next;
  for (int d = 1; !frontier.empty(); ++d) {
    next.clear();
    for (std::size_t k : frontier) {
      const int row = static_cast<int>(k / w);
      const int col = static_cast<int>(k % w);
      const int nbr[4][2] = {{row, col - 1}, {row, col + 1}, {row - 1, col}, {row + 1, col}};
      for (const auto& rc : nbr) {
        if (rc[0] < 0 || rc[1] < 0 || rc[0] >= h || rc[1] >= w) continue;
        const std::size_t j = out.index(rc[0], rc[1]);
        if (dist[j] != -1) continue;
        dist[j] = d;
        next.push_back(j);
      }
    }
    for (std::size_t j : next) {
      const int row = static_cast<int>(j / w);
      const int col = static_cast<int>(j % w);
      const int nbr[4][2] = {{row, col - 1}, {row, col + 1}, {row - 1, col}, {row + 1, col}};
      for (const auto& rc : nbr) {
        if (rc[0] < 0 || rc[1] < 0 || rc[0] >= h || rc[1] >= w) continue;
        const std::size_t src = out.index(rc[0], rc[1]);
        if (dist[src] != d - 1) continue;
        out.xyz[j] = out.xyz[src];
        out.ground[j] = out.ground[src];
        out.valid[j] = 1;
        break;
      }
    }
    frontier.swap(next);
  }
  return out;
}

Patch crop_resize(const XYZMap& map, const Rect2D& rect, int patch_size) {
  if (patch_size < 2) throw InputError("patch size must be at least 2");
  if (!(rect.u_max > rect.u_min) || !(rect.v_max > rect.v_min))
    throw InputError("crop rectangle must have positive area");
  if (rect.u_max < -0.5 || rect.v_max < -0.5 || rect.u_min > map.width - 0.5 ||
      rect.v_min > map.height - 0.5)
    throw InputError(fmt::format("crop rectangle [{}, {}]x[{}, {}] lies outside the map",
                                 rect.u_min, rect.u_max, rect.v_min, rect.v_max));
  Patch patch;
  patch.size = patch_size;
  patch.source = rect;
  const std::size_t count = static_cast<std::size_t>(patch_size) * patch_size;
  patch.points.reserve(count);
  patch.ground.reserve(count);
  for (int i = 0; i < patch_size; ++i) {
    const int row = sample_pixel(rect.v_min, rect.v_max, i, patch_size, map.height);
    for (int j = 0; j < patch_size; ++j) {
      const int col = sample_pixel(rect.u_min, rect.u_max, j, patch_size, map.width);
      const std::size_t k = map.index(row, col);
      patch.points.push_back(map.xyz[k]);
      patch.ground.push_back(map.ground[k]);
    }
  }
  return patch;
}

}  // namespace upm
