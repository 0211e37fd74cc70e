// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upm/config.hpp"

namespace upm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one subcommand (propose, ablate, eval, synth). `args` excludes the
/// program name. Returns the process exit code.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// One frame of an on-disk dataset.
struct FrameFiles {
  std::string stem;
  std::filesystem::path points;  // velodyne/*.bin or depth/*.bin
  std::filesystem::path calib;
  std::optional<std::filesystem::path> labels;
  bool depth = false;
};

/// Frames of `dir` sorted by stem. Throws InputError when neither velodyne/
/// nor depth/ exists.
std::vector<FrameFiles> list_frames(const std::filesystem::path& dir);

struct LoadedFrame {
  PointCloud cloud;  // camera frame, ground flagged
  GroundPlane plane;
  Calibration calib;
  bool plane_fitted = true;
};

/// Reads, transforms and ground-masks one frame. The RANSAC seed comes from
/// the config seed and the frame position.
LoadedFrame load_frame(const FrameFiles& frame, const Config& config, std::uint64_t frame_index);

/// Ground masking with the prior plane as a fallback when fitting fails.
LoadedFrame prepare_cloud(PointCloud cloud, const Calibration& calib, const Config& config,
                          std::uint64_t frame_index);

}  // namespace upm
