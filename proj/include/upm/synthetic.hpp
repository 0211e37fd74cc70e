// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "upm/ingest.hpp"

namespace upm {

enum class SensorMode { Lidar, Camera };

/// Spinning multi-beam scanner co-located with the camera.
struct LidarModel {
  double azimuth_res_deg = 0.16;
  double azimuth_fov_deg = 360.0;
  int beams = 64;
  double elevation_min_deg = -24.8;
  double elevation_max_deg = 2.0;
};

/// Dense depth camera: one ray per `stride`-th pixel.
struct CameraModel {
  double focal = 721.5377;
  double cx = 609.5593;
  double cy = 172.854;
  int width = 1242;
  int height = 375;
  int stride = 1;
};

/// Ground footprint and size of one object. (x, z) is the BEV center; the
/// object rests on the ground plane.
struct ObjectSpec {
  std::string label = "Car";
  double x = 0.0;
  double z = 10.0;
  double length = 3.7;
  double width = 1.5;
  double height = 1.45;
  double yaw = 0.0;
};

struct SceneParams {
  SensorMode mode = SensorMode::Lidar;
  LidarModel lidar;
  CameraModel camera;
  double camera_height = 1.65;  // ground plane is y = camera_height
  double max_range = 80.0;
  double range_noise_sigma = 0.0;

  /// Explicit objects. When empty, `random_objects` are placed instead.
  std::vector<ObjectSpec> objects;
  int random_objects = 0;
  double distance_min = 5.0;
  double distance_max = 65.0;
  bool stratified = false;  // one object per equal-width depth band
  double min_gap = 1.0;     // BEV clearance between random objects
  double length_min = 3.4, length_max = 3.8;
  double width_min = 1.4, width_max = 1.55;
  double height_min = 1.35, height_max = 1.5;
  std::vector<double> yaw_choices{0.0, kPi / 2.0};

  int scenes = 1;  // used by the dataset writers
};

/// Parses a key=value scene description. `object=x,z,l,w,h,yaw` may repeat.
SceneParams parse_scene_spec(const std::string& text);
SceneParams read_scene_spec(const std::filesystem::path& path);

struct SyntheticScene {
  SceneParams params;
  Calibration calib;
  ImageSize image;
  std::vector<GroundTruthBox> objects;
  PointCloud cloud;
  /// Per point: index into `objects`, or -1 for the ground plane.
  std::vector<int> source;
};

/// Ray-casts the scene. Fully determined by (params, seed). Throws
/// InputError when explicit objects overlap in BEV or leave the ground span.
SyntheticScene generate_synthetic_scene(const SceneParams& params, std::uint64_t seed);

/// Camera-mode depth raster (0 where the ray hit nothing).
DepthRaster render_depth_raster(const SyntheticScene& scene);

/// Writes velodyne/ (lidar mode) or depth/ (camera mode), calib/ and label_2/
/// for `params.scenes` frames named 000000, 000001, ...
void write_synthetic_dataset(const std::filesystem::path& dir, const SceneParams& params,
                             std::uint64_t seed);

/// Seed for frame `index` of a dataset generated from `base`.
std::uint64_t frame_seed(std::uint64_t base, std::uint64_t index);

}  // namespace upm
