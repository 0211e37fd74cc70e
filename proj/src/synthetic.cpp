// SPDX-License-Identifier: Apache-2.0
#include "upm/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "upm/keyvalue.hpp"

namespace upm {

namespace {

constexpr double kGroundSpanZ[2] = {0.0, 70.0};
constexpr double kGroundSpanX[2] = {-35.0, 35.0};

Box3D object_box(const ObjectSpec& o, double camera_height) {
  Box3D b;
  b.half_extents = Vec3(o.length / 2.0, o.height / 2.0, o.width / 2.0);
  b.center = Vec3(o.x, camera_height - o.height / 2.0, o.z);
  b.yaw = normalize_yaw(o.yaw);
  return b;
}

bool footprints_touch(const Box3D& a, const Box3D& b, double gap) {
  Box3D ga = a;
  Box3D gb = b;
  ga.half_extents += Vec3::Constant(gap / 2.0);
  gb.half_extents += Vec3::Constant(gap / 2.0);
  return bev_intersection_area(ga, gb) > 0.0;
}

bool inside_ground_span(const Box3D& b) {
  for (const Vec2& c : bev_footprint(b)) {
    if (c.x() < kGroundSpanX[0] || c.x() > kGroundSpanX[1]) return false;
    if (c.y() < kGroundSpanZ[0] || c.y() > kGroundSpanZ[1]) return false;
  }
  return true;
}

struct RayTarget {
  Box3D box;
  Mat3 rot_t;
};

// Entry distance of a ray (origin at the sensor) into an oriented box.
double intersect_box(const RayTarget& t, const Vec3& dir) {
  const Vec3 o = t.rot_t * (-t.box.center);
  const Vec3 d = t.rot_t * dir;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double h = t.box.half_extents[i];
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > h) return -1.0;
      continue;
    }
    double t1 = (-h - o[i]) / d[i];
    double t2 = (h - o[i]) / d[i];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return -1.0;
  }
  return t_near > 0.0 ? t_near : -1.0;
}

std::vector<ObjectSpec> place_random_objects(const SceneParams& p, std::mt19937_64& rng) {
  std::vector<ObjectSpec> placed;
  std::vector<Box3D> boxes;
  const double tan_half_fov = p.camera.cx / p.camera.focal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = std::max(0, p.random_objects);
  for (int i = 0; i < n; ++i) {
    double lo = p.distance_min;
    double hi = p.distance_max;
    if (p.stratified && n > 0) {
      const double w = (p.distance_max - p.distance_min) / n;
      lo = p.distance_min + i * w;
      hi = lo + w;
    }
    for (int attempt = 0; attempt < 200; ++attempt) {
      ObjectSpec o;
      o.z = lo + (hi - lo) * unit(rng);
      const double x_max = std::clamp(0.7 * o.z * tan_half_fov - 2.5, 0.0, 30.0);
      o.x = -x_max + 2.0 * x_max * unit(rng);
      o.length = p.length_min + (p.length_max - p.length_min) * unit(rng);
      o.width = p.width_min + (p.width_max - p.width_min) * unit(rng);
      o.height = p.height_min + (p.height_max - p.height_min) * unit(rng);
      if (!p.yaw_choices.empty()) {
        const auto k = static_cast<std::size_t>(unit(rng) * p.yaw_choices.size());
        o.yaw = p.yaw_choices[std::min(k, p.yaw_choices.size() - 1)];
      }
      const Box3D b = object_box(o, p.camera_height);
      if (!inside_ground_span(b)) continue;
      bool clear = true;
      for (const Box3D& other : boxes) clear = clear && !footprints_touch(b, other, p.min_gap);
      if (!clear) continue;
      placed.push_back(o);
      boxes.push_back(b);
      break;
    }
  }
  return placed;
}

}  // namespace

std::uint64_t frame_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SyntheticScene generate_synthetic_scene(const SceneParams& params, std::uint64_t seed) {
  if (params.random_objects < 0) throw InputError("object count must be non-negative");
  std::mt19937_64 rng(seed);

  SyntheticScene scene;
  scene.params = params;
  scene.calib = Calibration::pinhole(params.camera.focal, params.camera.cx, params.camera.cy);
  scene.image = ImageSize{params.camera.width, params.camera.height};

  std::vector<ObjectSpec> specs = params.objects;
  if (specs.empty()) {
    specs = place_random_objects(params, rng);
  } else {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const Box3D bi = object_box(specs[i], params.camera_height);
      if (!inside_ground_span(bi))
        throw InputError(fmt::format("object {} leaves the ground span", i));
      for (std::size_t j = 0; j < i; ++j)
        if (iou_bev(bi, object_box(specs[j], params.camera_height)) > 0.0)
          throw InputError(fmt::format("objects {} and {} overlap", j, i));
    }
  }

  std::vector<RayTarget> targets;
  for (const ObjectSpec& o : specs) {
    GroundTruthBox gt;
    gt.label = o.label;
    gt.box = object_box(o, params.camera_height);
    targets.push_back({gt.box, gt.box.rotation().transpose()});
    double truncation = 0.0;
    if (auto rect = project_box_to_image(gt.box, scene.calib, scene.image)) {
      gt.image_box = *rect;
      // Unclamped extent for truncation.
      double u_lo = 1e300, u_hi = -1e300, v_lo = 1e300, v_hi = -1e300;
      for (const Vec3& c : gt.box.corners()) {
        const Vec2 uv = scene.calib.project(c);
        u_lo = std::min(u_lo, uv.x());
        u_hi = std::max(u_hi, uv.x());
        v_lo = std::min(v_lo, uv.y());
        v_hi = std::max(v_hi, uv.y());
      }
      const double full = (u_hi - u_lo) * (v_hi - v_lo);
      truncation = full > 0.0 ? std::clamp(1.0 - rect->area() / full, 0.0, 1.0) : 1.0;
    } else {
      truncation = 1.0;
    }
    gt.difficulty = classify_difficulty(gt.image_box.height(), 0, truncation);
    scene.objects.push_back(gt);
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  auto cast = [&](const Vec3& dir) {
    double best = std::numeric_limits<double>::infinity();
    int hit = -2;
    if (dir.y() > 0.0) {
      best = params.camera_height / dir.y();
      hit = -1;
    }
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const double t = intersect_box(targets[k], dir);
      if (t > 0.0 && t < best) {
        best = t;
        hit = static_cast<int>(k);
      }
    }
    if (hit == -2) return;
    const double norm = dir.norm();
    if (best * norm > params.max_range) return;
    if (params.range_noise_sigma > 0.0) best += params.range_noise_sigma * noise(rng) / norm;
    scene.cloud.push_back(best * dir);
    scene.source.push_back(hit);
  };

  if (params.mode == SensorMode::Lidar) {
    const LidarModel& l = params.lidar;
    const int steps = std::max(1, static_cast<int>(std::lround(l.azimuth_fov_deg / l.azimuth_res_deg)));
    const double deg = kPi / 180.0;
    for (int b = 0; b < l.beams; ++b) {
      const double e = l.beams == 1 ? l.elevation_min_deg
                                    : l.elevation_min_deg + b * (l.elevation_max_deg -
                                                                 l.elevation_min_deg) /
                                                                    (l.beams - 1);
      for (int a = 0; a < steps; ++a) {
        const double az = (-l.azimuth_fov_deg / 2.0 + (a + 0.5) * l.azimuth_res_deg) * deg;
        cast(Vec3(std::cos(e * deg) * std::sin(az), -std::sin(e * deg),
                  std::cos(e * deg) * std::cos(az)));
      }
    }
  } else {
    const CameraModel& c = params.camera;
    const int stride = std::max(1, c.stride);
    for (int row = 0; row < c.height; row += stride)
      for (int col = 0; col < c.width; col += stride)
        cast(Vec3((col - c.cx) / c.focal, (row - c.cy) / c.focal, 1.0));
  }
  return scene;
}

DepthRaster render_depth_raster(const SyntheticScene& scene) {
  DepthRaster r;
  r.width = static_cast<std::uint32_t>(scene.image.width);
  r.height = static_cast<std::uint32_t>(scene.image.height);
  r.depth.assign(static_cast<std::size_t>(r.width) * r.height, 0.0f);
  for (const Vec3& p : scene.cloud.points) {
    if (!(p.z() > 0.0)) continue;
    const Vec2 uv = scene.calib.project(p);
    const int col = pixel_index(uv.x());
    const int row = pixel_index(uv.y());
    if (col < 0 || row < 0 || col >= scene.image.width || row >= scene.image.height) continue;
    float& d = r.depth[static_cast<std::size_t>(row) * r.width + col];
    if (d == 0.0f || p.z() < d) d = static_cast<float>(p.z());
  }
  return r;
}

void write_synthetic_dataset(const std::filesystem::path& dir, const SceneParams& params,
                             std::uint64_t seed) {
  namespace fs = std::filesystem;
  const bool lidar = params.mode == SensorMode::Lidar;
  const fs::path points_dir = dir / (lidar ? "velodyne" : "depth");
  std::error_code ec;
  for (const fs::path& d : {points_dir, dir / "calib", dir / "label_2"}) {
    fs::create_directories(d, ec);
    if (ec) throw FormatError(fmt::format("cannot create {}: {}", d.string(), ec.message()));
  }
  for (int i = 0; i < params.scenes; ++i) {
    const SyntheticScene scene =
        generate_synthetic_scene(params, frame_seed(seed, static_cast<std::uint64_t>(i)));
    const std::string stem = fmt::format("{:06d}", i);
    if (lidar) {
      std::vector<Vec3> sensor;
      sensor.reserve(scene.cloud.size());
      for (const Vec3& p : scene.cloud.points) sensor.push_back(scene.calib.camera_to_lidar(p));
      write_lidar_scan(points_dir / (stem + ".bin"), sensor);
    } else {
      write_depth_raster(points_dir / (stem + ".bin"), render_depth_raster(scene));
    }
    write_calibration(dir / "calib" / (stem + ".txt"), scene.calib);
    std::vector<KittiObject> labels;
    for (const GroundTruthBox& gt : scene.objects) {
      KittiObject o;
      o.type = gt.label;
      o.image_box = gt.image_box;
      o.box = gt.box;
      o.alpha = normalize_yaw(gt.box.yaw - std::atan2(gt.box.center.x(), gt.box.center.z()));
      labels.push_back(o);
    }
    write_kitti_objects(dir / "label_2" / (stem + ".txt"), labels);
  }
}

SceneParams parse_scene_spec(const std::string& text) {
  SceneParams p;
  for (const KeyValue& kv : parse_key_values(text)) {
    const std::string what = fmt::format("line {} ({})", kv.line, kv.key);
    auto num = [&] { return parse_double(kv.value, what); };
    auto integer = [&] { return static_cast<int>(parse_int(kv.value, what)); };
    const std::string& k = kv.key;
    if (k == "mode") {
      if (kv.value == "lidar") p.mode = SensorMode::Lidar;
      else if (kv.value == "camera") p.mode = SensorMode::Camera;
      else throw InputError(fmt::format("{}: mode must be lidar or camera", what));
    } else if (k == "scenes") p.scenes = integer();
    else if (k == "camera_height") p.camera_height = num();
    else if (k == "max_range") p.max_range = num();
    else if (k == "range_noise_sigma") p.range_noise_sigma = num();
    else if (k == "random_objects") p.random_objects = integer();
    else if (k == "distance_min") p.distance_min = num();
    else if (k == "distance_max") p.distance_max = num();
    else if (k == "stratified") p.stratified = parse_bool(kv.value, what);
    else if (k == "min_gap") p.min_gap = num();
    else if (k == "length_min") p.length_min = num();
    else if (k == "length_max") p.length_max = num();
    else if (k == "width_min") p.width_min = num();
    else if (k == "width_max") p.width_max = num();
    else if (k == "height_min") p.height_min = num();
    else if (k == "height_max") p.height_max = num();
    else if (k == "yaw_choices") p.yaw_choices = parse_double_list(kv.value, what);
    else if (k == "object") {
      const auto v = parse_double_list(kv.value, what);
      if (v.size() != 6) throw InputError(fmt::format("{}: expected x,z,l,w,h,yaw", what));
      ObjectSpec o;
      o.x = v[0];
      o.z = v[1];
      o.length = v[2];
      o.width = v[3];
      o.height = v[4];
      o.yaw = v[5];
      if (!(o.length > 0 && o.width > 0 && o.height > 0))
        throw InputError(fmt::format("{}: dimensions must be positive", what));
      p.objects.push_back(o);
    } else if (k == "lidar.azimuth_res_deg") p.lidar.azimuth_res_deg = num();
    else if (k == "lidar.azimuth_fov_deg") p.lidar.azimuth_fov_deg = num();
    else if (k == "lidar.beams") p.lidar.beams = integer();
    else if (k == "lidar.elevation_min_deg") p.lidar.elevation_min_deg = num();
    else if (k == "lidar.elevation_max_deg") p.lidar.elevation_max_deg = num();
    else if (k == "camera.focal") p.camera.focal = num();
    else if (k == "camera.cx") p.camera.cx = num();
    else if (k == "camera.cy") p.camera.cy = num();
    else if (k == "camera.width") p.camera.width = integer();
    else if (k == "camera.height") p.camera.height = integer();
    else if (k == "camera.stride") p.camera.stride = integer();
    else throw InputError(fmt::format("line {}: unknown scene key '{}'", kv.line, k));
  }
  if (p.scenes < 0) throw InputError("scenes must be non-negative");
  if (p.random_objects < 0) throw InputError("random_objects must be non-negative");
  if (!(p.lidar.azimuth_res_deg > 0.0) || p.lidar.beams < 1)
    throw InputError("lidar resolution must be positive");
  return p;
}

SceneParams read_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open scene spec {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene_spec(ss.str());
}

}  // namespace upm
