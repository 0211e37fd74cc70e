// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "upm/distill.hpp"
#include "upm/eval.hpp"
#include "upm/ground.hpp"
#include "upm/proposal.hpp"

namespace upm {

/// Every tunable of the pipeline. Loaded from `key = value` text; unknown
/// keys are rejected.
struct Config {
  UpmParams upm;
  RansacParams ransac;
  RectifyParams rectify;
  ImageSize image;  // front-view map size
  std::uint64_t seed = 0;
  std::vector<std::size_t> budgets{10, 50, 100};
  double iou = 0.1;
  IouMode mode = IouMode::Box3D;
  int ap_points = 11;
  double min_gt_distance = 0.0;
  Method method = Method::Npcd;
};

/// Applies one key; throws InputError for unknown keys or bad values.
void set_config_value(Config& config, const std::string& key, const std::string& value);
void apply_config_text(Config& config, const std::string& text);
Config load_config(const std::filesystem::path& path);

/// Every key in a fixed order, one `key = value` per line. Feeding the
/// result back through apply_config_text reproduces the config.
std::string dump_config(const Config& config);

/// Known keys in dump order.
std::vector<std::string> config_keys();

/// Throws InputError when values are out of their domains.
void validate(const Config& config);

}  // namespace upm
