// SPDX-License-Identifier: Apache-2.0
#include "upm/ingest.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>

#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace upm {

static_assert(std::endian::native == std::endian::little,
              "binary readers assume a little-endian host");

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(fmt::format("cannot write {}", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(fmt::format("short write to {}", path.string()));
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line_no) {
  T value{};
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw FormatError(fmt::format("line {}: malformed number '{}'", line_no, tok));
  return value;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

ScanReadResult decode_scan(const std::string& bytes, const std::filesystem::path& path,
                           const Calibration* calib) {
  constexpr std::size_t kStride = 4 * sizeof(float);
  if (bytes.size() % kStride != 0)
    throw FormatError(fmt::format("{}: truncated scan ({} bytes is not a multiple of 16)",
                                  path.string(), bytes.size()));
  ScanReadResult result;
  const std::size_t n = bytes.size() / kStride;
  result.cloud.points.reserve(n);
  result.cloud.ground_mask.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    float xyzr[4];
    std::memcpy(xyzr, bytes.data() + i * kStride, kStride);
    if (!std::isfinite(xyzr[0]) || !std::isfinite(xyzr[1]) || !std::isfinite(xyzr[2])) {
      ++result.nan_dropped;
      continue;
    }
    Vec3 p(xyzr[0], xyzr[1], xyzr[2]);
    if (calib != nullptr) {
      p = calib->lidar_to_camera(p);
      if (!(p.z() > 0.0)) {
        ++result.behind_dropped;
        continue;
      }
    }
    result.cloud.push_back(p);
  }
  return result;
}

}  // namespace

ScanReadResult read_lidar_scan(const std::filesystem::path& path) {
  return decode_scan(read_file(path), path, nullptr);
}

ScanReadResult read_lidar_scan(const std::filesystem::path& path,
                               const Calibration& calib) {
  return decode_scan(read_file(path), path, &calib);
}

void write_lidar_scan(const std::filesystem::path& path, std::span<const Vec3> points) {
  std::string bytes(points.size() * 4 * sizeof(float), '\0');
  for (std::size_t i = 0; i < points.size(); ++i) {
    const float xyzr[4] = {static_cast<float>(points[i].x()),
                           static_cast<float>(points[i].y()),
                           static_cast<float>(points[i].z()), 0.0f};
    std::memcpy(bytes.data() + i * sizeof(xyzr), xyzr, sizeof(xyzr));
  }
  write_file(path, bytes);
}

Calibration parse_calibration(const std::string& text) {
  struct Slot {
    std::size_t count;
    std::vector<double> values;
    bool seen = false;
  };
  std::map<std::string, Slot, std::less<>> wanted{
      {"P2", {12, {}}}, {"R0_rect", {9, {}}}, {"Tr_velo_to_cam", {12, {}}}};
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto colon = lines[i].find(':');
    if (colon == std::string_view::npos) {
      if (split_ws(lines[i]).empty()) continue;
      throw FormatError(fmt::format("line {}: expected 'key: values'", line_no));
    }
    const auto key_tokens = split_ws(lines[i].substr(0, colon));
    if (key_tokens.size() != 1)
      throw FormatError(fmt::format("line {}: malformed key", line_no));
    auto it = wanted.find(key_tokens.front());
    if (it == wanted.end()) continue;
    const auto tokens = split_ws(lines[i].substr(colon + 1));
    if (tokens.size() != it->second.count)
      throw FormatError(fmt::format("line {}: {} expects {} values, got {}", line_no,
                                    it->first, it->second.count, tokens.size()));
    it->second.values.clear();
    for (auto tok : tokens) it->second.values.push_back(parse_number<double>(tok, line_no));
    it->second.seen = true;
  }
  for (const auto& [key, slot] : wanted)
    if (!slot.seen) throw FormatError(fmt::format("missing key: {}", key));

  Calibration c;
  const auto& p2 = wanted.at("P2").values;
  const auto& r0 = wanted.at("R0_rect").values;
  const auto& tr = wanted.at("Tr_velo_to_cam").values;
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 4; ++col) {
      c.cam_projection(r, col) = p2[r * 4 + col];
      c.lidar_to_cam(r, col) = tr[r * 4 + col];
    }
    for (int col = 0; col < 3; ++col) c.rect_rotation(r, col) = r0[r * 3 + col];
  }
  return c;
}

Calibration read_calibration(const std::filesystem::path& path) {
  try {
    return parse_calibration(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_calibration(const std::filesystem::path& path, const Calibration& calib) {
  auto row_major = [](const auto& m) {
    std::string out;
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) out += fmt::format(" {:.12e}", m(r, c));
    return out;
  };
  std::string text;
  text += "P2:" + row_major(calib.cam_projection) + "\n";
  text += "R0_rect:" + row_major(calib.rect_rotation) + "\n";
  text += "Tr_velo_to_cam:" + row_major(calib.lidar_to_cam) + "\n";
  write_file(path, text);
}

DepthRaster read_depth_raster(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 12)
    throw FormatError(fmt::format("{}: depth raster header truncated", path.string()));
  std::uint32_t header[3];
  std::memcpy(header, bytes.data(), sizeof(header));
  if (header[0] != DepthRaster::kMagic)
    throw FormatError(fmt::format("{}: bad depth raster magic", path.string()));
  DepthRaster r;
  r.width = header[1];
  r.height = header[2];
  const std::size_t expected = static_cast<std::size_t>(r.width) * r.height * sizeof(float);
  if (bytes.size() - 12 != expected)
    throw FormatError(fmt::format("{}: header says {}x{} but payload has {} bytes",
                                  path.string(), r.width, r.height, bytes.size() - 12));
  r.depth.resize(static_cast<std::size_t>(r.width) * r.height);
  std::memcpy(r.depth.data(), bytes.data() + 12, expected);
  return r;
}

void write_depth_raster(const std::filesystem::path& path, const DepthRaster& raster) {
  if (raster.depth.size() != static_cast<std::size_t>(raster.width) * raster.height)
    throw InputError("depth raster size does not match its dimensions");
  std::string bytes(12 + raster.depth.size() * sizeof(float), '\0');
  const std::uint32_t header[3] = {DepthRaster::kMagic, raster.width, raster.height};
  std::memcpy(bytes.data(), header, sizeof(header));
  std::memcpy(bytes.data() + 12, raster.depth.data(), raster.depth.size() * sizeof(float));
  write_file(path, bytes);
}

PointCloud depth_raster_to_cloud(const DepthRaster& raster, const Mat3& intrinsics) {
  if (raster.depth.size() != static_cast<std::size_t>(raster.width) * raster.height)
    throw FormatError("depth raster size does not match its dimensions");
  Eigen::FullPivLU<Mat3> lu(intrinsics);
  if (!lu.isInvertible()) throw InputError("intrinsics matrix is singular");
  const Mat3 k_inv = lu.inverse();
  PointCloud cloud;
  for (std::uint32_t row = 0; row < raster.height; ++row) {
    for (std::uint32_t col = 0; col < raster.width; ++col) {
      const double d = raster.at(row, col);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      cloud.push_back(d * (k_inv * Vec3(col, row, 1.0)));
    }
  }
  return cloud;
}

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Moderate: return "moderate";
    case Difficulty::Hard: return "hard";
    case Difficulty::Unknown: break;
  }
  return "unknown";
}

Difficulty classify_difficulty(double box_height_px, int occlusion, double truncation) {
  if (box_height_px >= 40.0 && occlusion <= 0 && truncation <= 0.15) return Difficulty::Easy;
  if (box_height_px >= 25.0 && occlusion <= 1 && truncation <= 0.30) return Difficulty::Moderate;
  if (box_height_px >= 25.0 && occlusion <= 2 && truncation <= 0.50) return Difficulty::Hard;
  return Difficulty::Unknown;
}

Box3D box_from_kitti(double h, double w, double l, const Vec3& bottom_center, double ry) {
  Box3D b;
  b.half_extents = Vec3(l / 2.0, h / 2.0, w / 2.0);
  b.center = bottom_center - Vec3(0.0, h / 2.0, 0.0);
  b.yaw = normalize_yaw(ry);
  return b;
}

Vec3 kitti_bottom_center(const Box3D& box) {
  return box.center + Vec3(0.0, box.half_extents.y(), 0.0);
}

std::vector<KittiObject> parse_kitti_objects(const std::string& text) {
  std::vector<KittiObject> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    if (tok.size() != 15 && tok.size() != 16)
      throw FormatError(fmt::format("line {}: expected 15 or 16 fields, got {}", line_no,
                                    tok.size()));
    auto num = [&](std::size_t k) { return parse_number<double>(tok[k], line_no); };
    KittiObject o;
    o.type = std::string(tok[0]);
    o.truncation = num(1);
    o.occlusion = static_cast<int>(num(2));
    o.alpha = num(3);
    o.image_box = Rect2D{num(4), num(5), num(6), num(7)};
    const double h = num(8), w = num(9), l = num(10);
    if (o.type != "DontCare" && !(h > 0.0 && w > 0.0 && l > 0.0))
      throw FormatError(fmt::format("line {}: box dimensions must be positive", line_no));
    o.box = box_from_kitti(h, w, l, Vec3(num(11), num(12), num(13)), num(14));
    if (tok.size() == 16) o.score = num(15);
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<KittiObject> read_kitti_objects(const std::filesystem::path& path) {
  try {
    return parse_kitti_objects(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string format_kitti_object(const KittiObject& o) {
  const Vec3 bottom = kitti_bottom_center(o.box);
  std::string line = fmt::format(
      "{} {:.2f} {} {:.2f} {:.2f} {:.2f} {:.2f} {:.2f} {:.8f} {:.8f} {:.8f} {:.8f} {:.8f} "
      "{:.8f} {:.8f}",
      o.type, o.truncation, o.occlusion, o.alpha, o.image_box.u_min, o.image_box.v_min,
      o.image_box.u_max, o.image_box.v_max, 2.0 * o.box.half_extents.y(),
      2.0 * o.box.half_extents.z(), 2.0 * o.box.half_extents.x(), bottom.x(), bottom.y(),
      bottom.z(), o.box.yaw);
  if (o.score) line += fmt::format(" {:.6f}", *o.score);
  return line;
}

void write_kitti_objects(const std::filesystem::path& path,
                         std::span<const KittiObject> objects) {
  std::string text;
  for (const auto& o : objects) text += format_kitti_object(o) + "\n";
  write_file(path, text);
}

GroundTruthBox to_ground_truth(const KittiObject& obj) {
  return {obj.type, obj.box, obj.image_box,
          classify_difficulty(obj.image_box.height(), obj.occlusion, obj.truncation)};
}

std::vector<GroundTruthBox> read_labels(const std::filesystem::path& path) {
  std::vector<GroundTruthBox> out;
  for (const auto& o : read_kitti_objects(path))
    if (o.type != "DontCare") out.push_back(to_ground_truth(o));
  return out;
}

}  // namespace upm
