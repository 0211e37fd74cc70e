// SPDX-License-Identifier: Apache-2.0
#include "upm/commands.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include "upm/synthetic.hpp"

namespace upm {

namespace fs = std::filesystem;

std::vector<FrameFiles> list_frames(const fs::path& dir) {
  fs::path points_dir;
  bool depth = false;
  if (fs::is_directory(dir / "velodyne")) {
    points_dir = dir / "velodyne";
  } else if (fs::is_directory(dir / "depth")) {
    points_dir = dir / "depth";
    depth = true;
  } else {
    throw InputError(fmt::format("{} has neither velodyne/ nor depth/", dir.string()));
  }
  std::vector<FrameFiles> frames;
  for (const auto& entry : fs::directory_iterator(points_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".bin") continue;
    FrameFiles f;
    f.stem = entry.path().stem().string();
    f.points = entry.path();
    f.calib = dir / "calib" / (f.stem + ".txt");
    const fs::path label = dir / "label_2" / (f.stem + ".txt");
    if (fs::exists(label)) f.labels = label;
    f.depth = depth;
    frames.push_back(std::move(f));
  }
  std::sort(frames.begin(), frames.end(),
            [](const FrameFiles& a, const FrameFiles& b) { return a.stem < b.stem; });
  return frames;
}

LoadedFrame prepare_cloud(PointCloud cloud, const Calibration& calib, const Config& config,
                          std::uint64_t frame_index) {
  LoadedFrame f;
  f.calib = calib;
  RansacParams rp = config.ransac;
  rp.seed = frame_seed(config.seed, frame_index);
  try {
    f.plane = fit_ground(cloud, rp);
  } catch (const InputError&) {
    f.plane = prior_plane(rp.height_prior, rp.threshold);
    f.plane_fitted = false;
  }
  f.cloud = mask_ground(std::move(cloud), f.plane);
  return f;
}

LoadedFrame load_frame(const FrameFiles& frame, const Config& config, std::uint64_t frame_index) {
  if (!fs::exists(frame.calib)) throw FormatError("missing calibration " + frame.calib.string());
  const Calibration calib = read_calibration(frame.calib);
  PointCloud cloud;
  if (frame.depth) {
    cloud = depth_raster_to_cloud(read_depth_raster(frame.points), calib.intrinsics());
  } else {
    cloud = read_lidar_scan(frame.points, calib).cloud;
  }
  return prepare_cloud(std::move(cloud), calib, config, frame_index);
}

namespace {

// Raised for problems with the input data; mapped to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<double> iou;
  std::vector<std::size_t> budgets;
  std::optional<std::string> mode;
  std::optional<std::string> method;
  bool print_config = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--iou", o.iou, "IoU threshold")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--budget", o.budgets, "comma-separated proposal budgets")->delimiter(',');
  cmd->add_option("--mode", o.mode, "IoU mode")->check(CLI::IsMember({"2d", "bev", "3d"}));
  cmd->add_option("--method", o.method, "proposal method")
      ->check(CLI::IsMember({"npcd", "pcd", "inc"}));
  cmd->add_flag("--print-config", o.print_config, "print the effective configuration and exit");
}

Config resolve_config(const CommonOptions& o) {
  Config c = o.config_path.empty() ? Config{} : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.upm.workers = *o.workers;
  if (o.iou) c.iou = *o.iou;
  if (!o.budgets.empty()) c.budgets = o.budgets;
  if (o.mode) c.mode = parse_iou_mode(*o.mode);
  if (o.method) c.method = parse_method(*o.method);
  validate(c);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw DataError(fmt::format("cannot create directory {}", dir.string()));
}

std::string format_proposals(std::span<const Detection> dets, const std::string& label) {
  std::string text;
  for (const Detection& d : dets) {
    KittiObject o;
    o.type = label;
    o.image_box = d.image_box.value_or(Rect2D{});
    o.box = d.box;
    o.alpha = normalize_yaw(d.box.yaw - std::atan2(d.box.center.x(), d.box.center.z()));
    o.score = d.score;
    text += format_kitti_object(o);
    text += '\n';
  }
  return text;
}

// Ranked proposals of the configured method on one loaded frame.
struct FrameResult {
  std::vector<Detection> detections;
  UpmStats stats;
  double millis = 0.0;
};

FrameResult propose_frame(const LoadedFrame& frame, const Config& config, unsigned workers) {
  const auto t0 = std::chrono::steady_clock::now();
  UpmParams p = config.upm;
  p.workers = workers;
  FrameResult r;
  const AnchorSet anchors = generate_anchors(frame.plane, p.grid, frame.calib, config.image);
  r.stats.anchors_total = anchors.total_before_culling;
  r.stats.anchors_in_frustum = anchors.anchors.size();
  switch (config.method) {
    case Method::Npcd: {
      const XYZMap map = prepare_map(frame.cloud, frame.calib, config.image);
      const UpmResult u = run_upm(anchors, map, frame.calib, p);
      r.stats = u.stats;
      for (const Proposal& q : u.proposals)
        r.detections.push_back(make_detection(q.box, q.density, frame.calib, config.image));
      break;
    }
    case Method::Pcd:
    case Method::Inc: {
      const std::vector<RankedBox> ranked = config.method == Method::Pcd
                                                ? rank_pcd(anchors.anchors, frame.cloud, workers)
                                                : baseline_inc(anchors.anchors);
      const std::size_t n = std::min(p.top_k, ranked.size());
      for (std::size_t i = 0; i < n; ++i)
        r.detections.push_back(
            make_detection(ranked[i].box, ranked[i].score, frame.calib, config.image));
      r.stats.after_selection = ranked.size();
      r.stats.after_enlargement = ranked.size();
      r.stats.proposals = n;
      break;
    }
  }
  r.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                 .count();
  return r;
}

// Splits `workers` between frames and anchors: frames run in parallel when
// there are several, otherwise the single frame gets every worker.
unsigned inner_workers(std::size_t frames, unsigned workers) {
  return frames > 1 ? 1u : std::max(1u, workers);
}

int cmd_propose(const fs::path& input, const fs::path& output, const Config& config,
                std::ostream& out, std::ostream& err) {
  const std::vector<FrameFiles> frames = list_frames(input);
  if (frames.empty()) throw DataError(fmt::format("no frames in {}", input.string()));
  ensure_dir(output);
  std::vector<std::optional<FrameResult>> results(frames.size());
  std::vector<std::string> errors(frames.size());
  const unsigned inner = inner_workers(frames.size(), config.upm.workers);
  const std::string label =
      config.upm.grid.templates.size() == 1 ? config.upm.grid.templates[0].label : "Object";
  parallel_for(frames.size(), inner == 1 ? config.upm.workers : 1,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i) {
                   try {
                     const LoadedFrame f = load_frame(frames[i], config, i);
                     results[i] = propose_frame(f, config, inner);
                   } catch (const std::exception& e) {
                     errors[i] = e.what();
                   }
                 }
               });
  int status = kExitOk;
  double pre = 0.0, post = 0.0, props = 0.0, millis = 0.0;
  std::size_t done = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!results[i]) {
      err << fmt::format("error: frame {}: {}: {}\n", frames[i].stem, frames[i].points.string(),
                         errors[i]);
      status = kExitData;
      continue;
    }
    const FrameResult& r = *results[i];
    write_text(output / (frames[i].stem + ".txt"), format_proposals(r.detections, label));
    pre += static_cast<double>(r.stats.anchors_in_frustum);
    post += static_cast<double>(r.stats.after_selection);
    props += static_cast<double>(r.stats.proposals);
    millis += r.millis;
    ++done;
  }
  const double n = done == 0 ? 1.0 : static_cast<double>(done);
  out << fmt::format(
      "frames {} failed {} | anchors pre-selection {:.1f} post-selection {:.1f} proposals "
      "{:.1f} | runtime {:.1f} ms/frame\n",
      done, frames.size() - done, pre / n, post / n, props / n, millis / n);
  return status;
}

// Loads every input scene for the ablation: synthetic scenes from a spec
// file or labelled frames from a dataset directory.
std::vector<AblationScene> ablation_scenes(const fs::path& input, const Config& config,
                                           std::size_t max_budget) {
  const bool from_spec = fs::is_regular_file(input);
  SceneParams spec;
  std::vector<FrameFiles> frames;
  std::size_t count = 0;
  if (from_spec) {
    spec = read_scene_spec(input);
    count = static_cast<std::size_t>(std::max(0, spec.scenes));
  } else {
    frames = list_frames(input);
    count = frames.size();
  }
  if (count == 0) throw DataError(fmt::format("no scenes in {}", input.string()));

  std::vector<AblationScene> scenes(count);
  std::vector<std::string> errors(count);
  const unsigned inner = inner_workers(count, config.upm.workers);
  parallel_for(count, inner == 1 ? config.upm.workers : 1, [&](std::size_t begin,
                                                               std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        LoadedFrame f;
        ImageSize image = config.image;
        if (from_spec) {
          SyntheticScene s = generate_synthetic_scene(spec, frame_seed(config.seed, i));
          scenes[i].gts = s.objects;
          image = s.image;
          f = prepare_cloud(std::move(s.cloud), s.calib, config, i);
        } else {
          if (!frames[i].labels)
            throw DataError("missing labels for frame " + frames[i].stem);
          f = load_frame(frames[i], config, i);
          scenes[i].gts = read_labels(*frames[i].labels);
        }
        UpmParams p = config.upm;
        p.workers = inner;
        scenes[i].rankings = rank_methods(f.cloud, f.plane, f.calib, image, p, max_budget);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  });
  for (std::size_t i = 0; i < count; ++i)
    if (!errors[i].empty())
      throw DataError(fmt::format("scene {}: {}", from_spec ? std::to_string(i) : frames[i].stem,
                                  errors[i]));
  return scenes;
}

int cmd_ablate(const fs::path& input, const fs::path& output, const Config& config,
               const CommonOptions& opts, std::ostream& out) {
  AblationOptions ao;
  ao.budgets = config.budgets;
  ao.iou = config.iou;
  ao.min_gt_distance = config.min_gt_distance;
  if (opts.mode) ao.modes = {config.mode};
  if (opts.method) ao.methods = {config.method};
  const std::vector<AblationScene> scenes = ablation_scenes(input, config, ao.budgets.back());
  const std::vector<RecallCurve> curves = ablation_curves(scenes, ao);
  std::ostringstream csv;
  write_recall_csv(csv, curves);
  if (output.has_parent_path()) ensure_dir(output.parent_path());
  write_text(output, csv.str());
  out << fmt::format("scenes {} | rows {} | wrote {}\n", scenes.size(),
                     curves.size() * ao.budgets.size(), output.string());
  return kExitOk;
}

std::map<std::string, fs::path> text_files(const fs::path& dir) {
  std::map<std::string, fs::path> files;
  if (!fs::is_directory(dir)) throw DataError(fmt::format("{} is not a directory", dir.string()));
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.emplace(entry.path().stem().string(), entry.path());
  return files;
}

int cmd_eval(const fs::path& proposals_dir, const fs::path& labels_dir, const fs::path& output,
             const Config& config, const CommonOptions& opts, std::ostream& out,
             std::ostream& err) {
  const auto labels = text_files(labels_dir);
  if (labels.empty()) throw DataError(fmt::format("no label files in {}", labels_dir.string()));
  const auto props = text_files(proposals_dir);

  std::vector<FrameEval> frames;
  std::size_t excluded = 0;
  std::set<std::string> stems;
  for (const auto& [stem, path] : labels) stems.insert(stem);
  for (const auto& [stem, path] : props) stems.insert(stem);
  for (const std::string& stem : stems) {
    const auto l = labels.find(stem);
    const auto p = props.find(stem);
    if (l == labels.end() || p == props.end()) {
      err << fmt::format("warning: frame {} only present in {}; excluded\n", stem,
                         l == labels.end() ? proposals_dir.string() : labels_dir.string());
      ++excluded;
      continue;
    }
    FrameEval f;
    f.gts = read_labels(l->second);
    for (const KittiObject& o : read_kitti_objects(p->second)) {
      if (o.type == "DontCare") continue;
      f.detections.push_back({o.box, o.image_box, o.score.value_or(0.0)});
    }
    std::stable_sort(f.detections.begin(), f.detections.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw DataError("no frame is present in both directories");

  const std::vector<IouMode> modes =
      opts.mode ? std::vector<IouMode>{config.mode}
                : std::vector<IouMode>{IouMode::Image2D, IouMode::Bev, IouMode::Box3D};
  const std::vector<std::pair<const char*, std::optional<Difficulty>>> tiers{
      {"easy", Difficulty::Easy},
      {"moderate", Difficulty::Moderate},
      {"hard", Difficulty::Hard},
      {"all", std::nullopt}};

  std::string csv = "mode,difficulty,iou,points,ap,recall_at_10\n";
  out << fmt::format("frames {} excluded {}\n", frames.size(), excluded);
  out << fmt::format("{:<5} {:<9} {:>8} {:>12}\n", "mode", "tier", "AP", "recall@10");
  for (IouMode mode : modes) {
    for (const auto& [name, tier] : tiers) {
      const double ap = average_precision(frames, config.iou, mode, config.ap_points, tier);
      std::size_t hits = 0, total = 0;
      for (const FrameEval& f : frames) {
        std::vector<GroundTruthBox> care;
        for (const GroundTruthBox& g : f.gts)
          if (!tier || (g.difficulty != Difficulty::Unknown &&
                        static_cast<int>(g.difficulty) <= static_cast<int>(*tier)))
            care.push_back(g);
        const auto matched = match_greedy(f.detections, care, config.iou, mode, 10);
        hits += static_cast<std::size_t>(std::count(matched.begin(), matched.end(), true));
        total += care.size();
      }
      const double recall =
          total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
      csv += fmt::format("{},{},{:g},{},{:.6f},{:.6f}\n", to_string(mode), name, config.iou,
                         config.ap_points, ap, recall);
      out << fmt::format("{:<5} {:<9} {:>8.4f} {:>12.4f}\n", to_string(mode), name, ap, recall);
    }
  }
  ensure_dir(output);
  write_text(output / "ap_summary.csv", csv);
  return kExitOk;
}

int cmd_synth(const fs::path& spec_path, const fs::path& output, const Config& config,
              std::ostream& out) {
  const SceneParams spec = read_scene_spec(spec_path);
  ensure_dir(output);
  try {
    write_synthetic_dataset(output, spec, config.seed);
  } catch (const FormatError& e) {
    throw DataError(e.what());
  }
  out << fmt::format("wrote {} frames to {}\n", spec.scenes, output.string());
  return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised 3D object proposals from point-cloud density", "upm"};
  app.require_subcommand(1);

  CommonOptions opts;
  fs::path input, second, output;

  auto* propose = app.add_subcommand("propose", "generate proposals for every frame of a dataset");
  propose->add_option("input", input, "dataset directory (velodyne/ or depth/, calib/)")
      ->required();
  propose->add_option("-o,--output", output, "output directory")->required();
  add_common(propose, opts);

  auto* ablate = app.add_subcommand("ablate", "recall curves of NPCD, PCD and INC");
  ablate->add_option("input", input, "scene spec file or labelled dataset directory")->required();
  ablate->add_option("-o,--output", output, "output CSV path")->required();
  add_common(ablate, opts);

  auto* eval = app.add_subcommand("eval", "AP and recall of proposal files against labels");
  eval->add_option("proposals", input, "proposal directory")->required();
  eval->add_option("labels", second, "label directory")->required();
  eval->add_option("-o,--output", output, "directory for ap_summary.csv")->required();
  add_common(eval, opts);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("spec", input, "scene spec file")->required();
  synth->add_option("-o,--output", output, "output directory")->required();
  add_common(synth, opts);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // --print-config alone is a complete request; anything else is a usage error.
    if (std::find(args.begin(), args.end(), "--print-config") == args.end()) {
      app.exit(e, out, err);
      return kExitUsage;
    }
  }

  Config config;
  try {
    config = resolve_config(opts);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  if (opts.print_config || std::find(args.begin(), args.end(), "--print-config") != args.end()) {
    out << dump_config(config);
    return kExitOk;
  }

  try {
    if (propose->parsed()) return cmd_propose(input, output, config, out, err);
    if (ablate->parsed()) return cmd_ablate(input, output, config, opts, out);
    if (eval->parsed()) return cmd_eval(input, second, output, config, opts, out, err);
    if (synth->parsed()) return cmd_synth(input, output, config, out);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace upm
