// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upm/calibration.hpp"
#include "upm/geometry.hpp"

namespace upm {

/// Unordered points in the camera frame with a per-point ground flag.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::uint8_t> ground_mask;  // same length as points

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void push_back(const Vec3& p, bool ground = false) {
    points.push_back(p);
    ground_mask.push_back(ground ? 1 : 0);
  }
};

struct ScanReadResult {
  PointCloud cloud;
  std::size_t nan_dropped = 0;
  std::size_t behind_dropped = 0;
};

/// Reads a velodyne scan (little-endian float32 x, y, z, reflectance per
/// point). Without a calibration the points stay in the sensor frame; with one
/// they are moved to the camera frame and points with z <= 0 are dropped.
ScanReadResult read_lidar_scan(const std::filesystem::path& path);
ScanReadResult read_lidar_scan(const std::filesystem::path& path,
                               const Calibration& calib);

/// Writes sensor-frame points in the velodyne layout with zero reflectance.
void write_lidar_scan(const std::filesystem::path& path,
                      std::span<const Vec3> points);

/// Parses `P2`, `R0_rect` and `Tr_velo_to_cam` from a KITTI calib file.
Calibration read_calibration(const std::filesystem::path& path);
Calibration parse_calibration(const std::string& text);
void write_calibration(const std::filesystem::path& path, const Calibration& calib);

/// Depth raster: 12-byte header (magic, width, height; little-endian u32)
/// followed by row-major float32 depths in meters.
struct DepthRaster {
  static constexpr std::uint32_t kMagic = 0x54535244;  // "DRST"

  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> depth;

  float at(std::uint32_t row, std::uint32_t col) const {
    return depth[static_cast<std::size_t>(row) * width + col];
  }
};

DepthRaster read_depth_raster(const std::filesystem::path& path);
void write_depth_raster(const std::filesystem::path& path, const DepthRaster& raster);

/// Back-projects every pixel with positive depth: p = depth * K^-1 (u, v, 1),
/// u = column and v = row.
PointCloud depth_raster_to_cloud(const DepthRaster& raster, const Mat3& intrinsics);

enum class Difficulty { Easy = 0, Moderate = 1, Hard = 2, Unknown = 3 };

const char* to_string(Difficulty d);

/// KITTI tiers from the 2D box height in pixels, occlusion level and
/// truncation fraction.
Difficulty classify_difficulty(double box_height_px, int occlusion, double truncation);

/// One line of a KITTI label_2 file. `score` is present on detection files.
struct KittiObject {
  std::string type = "Car";
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = -10.0;
  Rect2D image_box;
  Box3D box;
  std::optional<double> score;
};

struct GroundTruthBox {
  std::string label = "Car";
  Box3D box;
  Rect2D image_box;
  Difficulty difficulty = Difficulty::Easy;
};

/// KITTI stores full dimensions (h, w, l) and the bottom-face center.
Box3D box_from_kitti(double h, double w, double l, const Vec3& bottom_center, double ry);
Vec3 kitti_bottom_center(const Box3D& box);

std::vector<KittiObject> read_kitti_objects(const std::filesystem::path& path);
std::vector<KittiObject> parse_kitti_objects(const std::string& text);
void write_kitti_objects(const std::filesystem::path& path,
                         std::span<const KittiObject> objects);
std::string format_kitti_object(const KittiObject& obj);

GroundTruthBox to_ground_truth(const KittiObject& obj);
/// Reads a label file, skipping DontCare entries.
std::vector<GroundTruthBox> read_labels(const std::filesystem::path& path);

}  // namespace upm
