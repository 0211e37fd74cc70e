// SPDX-License-Identifier: Apache-2.0
#include "upm/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <functional>
#include <sstream>

#include "upm/keyvalue.hpp"

namespace upm {
namespace {

struct Entry {
  const char* key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{}", i ? "," : "", v[i]);
  return s;
}

// Anchor templates as "label:l:h:w;label:l:h:w" with full dimensions.
std::vector<AnchorTemplate> parse_templates(const std::string& text) {
  std::vector<AnchorTemplate> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const std::string_view t = trim(item);
    if (t.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream is{std::string(t)};
    std::string p;
    while (std::getline(is, p, ':')) parts.push_back(std::string(trim(p)));
    if (parts.size() != 4 || parts[0].empty())
      throw InputError(fmt::format("anchor template '{}' is not label:l:h:w", t));
    AnchorTemplate a;
    a.label = parts[0];
    const double l = parse_double(parts[1], "anchor length");
    const double h = parse_double(parts[2], "anchor height");
    const double w = parse_double(parts[3], "anchor width");
    if (!(l > 0 && h > 0 && w > 0)) throw InputError("anchor dimensions must be positive");
    a.half_extents = Vec3(l / 2.0, h / 2.0, w / 2.0);
    out.push_back(a);
  }
  if (out.empty()) throw InputError("at least one anchor template is required");
  return out;
}

std::string format_templates(const std::vector<AnchorTemplate>& ts) {
  std::string s;
  for (std::size_t i = 0; i < ts.size(); ++i)
    s += fmt::format("{}{}:{}:{}:{}", i ? ";" : "", ts[i].label, 2.0 * ts[i].half_extents.x(),
                     2.0 * ts[i].half_extents.y(), 2.0 * ts[i].half_extents.z());
  return s;
}

int to_int(const std::string& v, const char* what) {
  return static_cast<int>(parse_int(v, what));
}

std::size_t to_count(const std::string& v, const char* what) {
  const long long n = parse_int(v, what);
  if (n < 0) throw InputError(fmt::format("{} must be nonnegative", what));
  return static_cast<std::size_t>(n);
}

#define UPM_DOUBLE(name, field)                                              \
  Entry {                                                                    \
    name, [](Config& c, const std::string& v) { c.field = parse_double(v, name); }, \
        [](const Config& c) { return fmt::format("{}", c.field); }           \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table{
      {"patch_size", [](Config& c, const std::string& v) { c.upm.patch_size = to_int(v, "patch_size"); },
       [](const Config& c) { return fmt::format("{}", c.upm.patch_size); }},
      UPM_DOUBLE("density_threshold", upm.density_threshold),
      UPM_DOUBLE("enlarge_ratio", upm.enlarge_ratio),
      {"enlarge_slack",
       [](Config& c, const std::string& v) { c.upm.enlarge_slack = to_int(v, "enlarge_slack"); },
       [](const Config& c) { return fmt::format("{}", c.upm.enlarge_slack); }},
      {"top_k", [](Config& c, const std::string& v) { c.upm.top_k = to_count(v, "top_k"); },
       [](const Config& c) { return fmt::format("{}", c.upm.top_k); }},
      {"nms_iou",
       [](Config& c, const std::string& v) {
         if (v == "none") c.upm.nms_iou.reset();
         else c.upm.nms_iou = parse_double(v, "nms_iou");
       },
       [](const Config& c) {
         return c.upm.nms_iou ? fmt::format("{}", *c.upm.nms_iou) : std::string("none");
       }},
      {"workers",
       [](Config& c, const std::string& v) {
         c.upm.workers = static_cast<unsigned>(to_count(v, "workers"));
       },
       [](const Config& c) { return fmt::format("{}", c.upm.workers); }},
      UPM_DOUBLE("grid.spacing", upm.grid.spacing),
      UPM_DOUBLE("grid.z_min", upm.grid.z_min),
      UPM_DOUBLE("grid.z_max", upm.grid.z_max),
      UPM_DOUBLE("grid.x_min", upm.grid.x_min),
      UPM_DOUBLE("grid.x_max", upm.grid.x_max),
      {"grid.yaws",
       [](Config& c, const std::string& v) { c.upm.grid.yaws = parse_double_list(v, "grid.yaws"); },
       [](const Config& c) { return join_doubles(c.upm.grid.yaws); }},
      {"anchors",
       [](Config& c, const std::string& v) { c.upm.grid.templates = parse_templates(v); },
       [](const Config& c) { return format_templates(c.upm.grid.templates); }},
      {"ransac.iterations",
       [](Config& c, const std::string& v) { c.ransac.iterations = to_int(v, "ransac.iterations"); },
       [](const Config& c) { return fmt::format("{}", c.ransac.iterations); }},
      UPM_DOUBLE("ransac.threshold_m", ransac.threshold),
      UPM_DOUBLE("ground.height_prior_m", ransac.height_prior),
      UPM_DOUBLE("ground.prior_band_m", ransac.prior_band),
      UPM_DOUBLE("rectify.s_t", rectify.s_t),
      UPM_DOUBLE("rectify.k", rectify.k),
      UPM_DOUBLE("rectify.s_l", rectify.s_l),
      UPM_DOUBLE("rectify.s_h", rectify.s_h),
      {"map.width", [](Config& c, const std::string& v) { c.image.width = to_int(v, "map.width"); },
       [](const Config& c) { return fmt::format("{}", c.image.width); }},
      {"map.height",
       [](Config& c, const std::string& v) { c.image.height = to_int(v, "map.height"); },
       [](const Config& c) { return fmt::format("{}", c.image.height); }},
      {"seed",
       [](Config& c, const std::string& v) {
         c.seed = static_cast<std::uint64_t>(to_count(v, "seed"));
       },
       [](const Config& c) { return fmt::format("{}", c.seed); }},
      {"eval.budgets",
       [](Config& c, const std::string& v) {
         c.budgets.clear();
         for (double b : parse_double_list(v, "eval.budgets")) {
           if (!(b >= 1.0) || b != static_cast<double>(static_cast<std::size_t>(b)))
             throw InputError(fmt::format("budget '{}' is not a positive integer", b));
           c.budgets.push_back(static_cast<std::size_t>(b));
         }
       },
       [](const Config& c) {
         std::string s;
         for (std::size_t i = 0; i < c.budgets.size(); ++i)
           s += fmt::format("{}{}", i ? "," : "", c.budgets[i]);
         return s;
       }},
      UPM_DOUBLE("eval.iou", iou),
      {"eval.mode", [](Config& c, const std::string& v) { c.mode = parse_iou_mode(v); },
       [](const Config& c) { return std::string(to_string(c.mode)); }},
      {"eval.ap_points",
       [](Config& c, const std::string& v) { c.ap_points = to_int(v, "eval.ap_points"); },
       [](const Config& c) { return fmt::format("{}", c.ap_points); }},
      UPM_DOUBLE("eval.min_gt_distance", min_gt_distance),
      {"method", [](Config& c, const std::string& v) { c.method = parse_method(v); },
       [](const Config& c) {
         std::string s = to_string(c.method);
         for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
         return s;
       }},
  };
  return table;
}

#undef UPM_DOUBLE

}  // namespace

void set_config_value(Config& config, const std::string& key_in, const std::string& value) {
  // One seed drives every random choice; the RANSAC spelling is accepted too.
  const std::string key = key_in == "ransac.seed" ? "seed" : key_in;
  for (const Entry& e : entries()) {
    if (key == e.key) {
      e.set(config, value);
      return;
    }
  }
  throw InputError(fmt::format("unknown config key '{}'", key));
}

void apply_config_text(Config& config, const std::string& text) {
  for (const KeyValue& kv : parse_key_values(text)) {
    try {
      set_config_value(config, kv.key, kv.value);
    } catch (const InputError& e) {
      throw InputError(fmt::format("line {}: {}", kv.line, e.what()));
    }
  }
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot read config {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  Config c;
  apply_config_text(c, ss.str());
  validate(c);
  return c;
}

std::string dump_config(const Config& config) {
  std::string out;
  for (const Entry& e : entries()) out += fmt::format("{} = {}\n", e.key, e.get(config));
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Entry& e : entries()) keys.emplace_back(e.key);
  return keys;
}

void validate(const Config& c) {
  if (c.upm.patch_size < 2) throw InputError("patch_size must be at least 2");
  if (!(c.upm.density_threshold > 0.0 && c.upm.density_threshold < 1.0))
    throw InputError("density_threshold must lie in (0, 1)");
  if (!(c.upm.enlarge_ratio > 0.0)) throw InputError("enlarge_ratio must be positive");
  if (c.upm.enlarge_slack < 0) throw InputError("enlarge_slack must be nonnegative");
  if (c.upm.top_k < 1) throw InputError("top_k must be at least 1");
  if (!(c.upm.grid.spacing > 0.0)) throw InputError("grid.spacing must be positive");
  if (!(c.upm.grid.z_max > c.upm.grid.z_min) || !(c.upm.grid.x_max > c.upm.grid.x_min))
    throw InputError("grid span is empty");
  if (c.upm.grid.yaws.empty()) throw InputError("grid.yaws must not be empty");
  if (c.ransac.iterations < 1) throw InputError("ransac.iterations must be at least 1");
  if (c.image.width < 1 || c.image.height < 1) throw InputError("map size must be positive");
  if (c.budgets.empty()) throw InputError("eval.budgets must not be empty");
  for (std::size_t i = 1; i < c.budgets.size(); ++i)
    if (c.budgets[i] <= c.budgets[i - 1])
      throw InputError("eval.budgets must be strictly increasing");
  if (c.ap_points != 11 && c.ap_points != 40) throw InputError("eval.ap_points must be 11 or 40");
  validate(c.rectify);
}

}  // namespace upm
