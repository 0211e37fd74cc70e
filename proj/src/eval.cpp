// SPDX-License-Identifier: Apache-2.0
#include "upm/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace upm {

const char* to_string(IouMode m) {
  switch (m) {
    case IouMode::Image2D: return "2d";
    case IouMode::Bev: return "bev";
    case IouMode::Box3D: return "3d";
  }
  return "?";
}

IouMode parse_iou_mode(const std::string& s) {
  if (s == "2d") return IouMode::Image2D;
  if (s == "bev") return IouMode::Bev;
  if (s == "3d") return IouMode::Box3D;
  throw InputError(fmt::format("unknown IoU mode '{}' (expected 2d, bev or 3d)", s));
}

const char* to_string(Method m) {
  switch (m) {
    case Method::Npcd: return "NPCD";
    case Method::Pcd: return "PCD";
    case Method::Inc: return "INC";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "npcd") return Method::Npcd;
  if (lower == "pcd") return Method::Pcd;
  if (lower == "inc") return Method::Inc;
  throw InputError(fmt::format("unknown method '{}' (expected npcd, pcd or inc)", s));
}

Detection make_detection(const Box3D& box, double score, const Calibration& calib,
                         ImageSize image) {
  return {box, project_box_to_image(box, calib, image), score};
}

double overlap(const Detection& det, const GroundTruthBox& gt, IouMode mode) {
  switch (mode) {
    case IouMode::Image2D: return det.image_box ? iou_2d(*det.image_box, gt.image_box) : 0.0;
    case IouMode::Bev: return iou_bev(det.box, gt.box);
    case IouMode::Box3D: return iou_3d(det.box, gt.box);
  }
  return 0.0;
}

namespace {

// Index of the best unmatched box with IoU >= threshold, or -1.
int best_match(const Detection& det, std::span<const GroundTruthBox> gts,
               const std::vector<bool>& taken, double thresh, IouMode mode,
               const std::vector<bool>* eligible = nullptr) {
  int best = -1;
  double best_iou = -1.0;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (taken[g] || (eligible && !(*eligible)[g])) continue;
    const double iou = overlap(det, gts[g], mode);
    if (iou >= thresh && iou > best_iou) {
      best_iou = iou;
      best = static_cast<int>(g);
    }
  }
  return best;
}

}  // namespace

std::vector<bool> match_greedy(std::span<const Detection> ranked,
                               std::span<const GroundTruthBox> gts, double iou_thresh,
                               IouMode mode, std::size_t budget) {
  std::vector<bool> matched(gts.size(), false);
  const std::size_t n = std::min(budget, ranked.size());
  std::size_t left = gts.size();
  for (std::size_t i = 0; i < n && left > 0; ++i) {
    const int g = best_match(ranked[i], gts, matched, iou_thresh, mode);
    if (g >= 0) {
      matched[g] = true;
      --left;
    }
  }
  return matched;
}

double recall_at(std::span<const Detection> ranked, std::span<const GroundTruthBox> gts,
                 double iou_thresh, IouMode mode, std::size_t budget) {
  if (budget == 0) throw InputError("budget must be at least 1");
  if (gts.empty()) return 1.0;
  const auto matched = match_greedy(ranked, gts, iou_thresh, mode, budget);
  const auto hits = std::count(matched.begin(), matched.end(), true);
  return static_cast<double>(hits) / static_cast<double>(gts.size());
}

PRCurve pr_curve(std::span<const FrameEval> frames, double iou_thresh, IouMode mode,
                 std::optional<Difficulty> tier) {
  struct Ref {
    std::size_t frame, det;
    double score;
  };
  std::vector<Ref> order;
  PRCurve curve;
  std::vector<std::vector<bool>> care(frames.size());
  std::vector<std::vector<bool>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t d = 0; d < frames[f].detections.size(); ++d)
      order.push_back({f, d, frames[f].detections[d].score});
    for (const GroundTruthBox& g : frames[f].gts) {
      const bool c = !tier || (g.difficulty != Difficulty::Unknown &&
                               static_cast<int>(g.difficulty) <= static_cast<int>(*tier));
      care[f].push_back(c);
      curve.positives += c ? 1 : 0;
    }
    taken[f].assign(frames[f].gts.size(), false);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Ref& a, const Ref& b) { return a.score > b.score; });

  std::size_t tp = 0, fp = 0;
  for (const Ref& r : order) {
    const FrameEval& fr = frames[r.frame];
    const Detection& det = fr.detections[r.det];
    const int g = best_match(det, fr.gts, taken[r.frame], iou_thresh, mode, &care[r.frame]);
    if (g >= 0) {
      taken[r.frame][g] = true;
      ++tp;
    } else {
      std::vector<bool> ignored(care[r.frame].size());
      for (std::size_t i = 0; i < ignored.size(); ++i) ignored[i] = !care[r.frame][i];
      const std::vector<bool> none(ignored.size(), false);
      if (best_match(det, fr.gts, none, iou_thresh, mode, &ignored) >= 0) continue;
      ++fp;
    }
    curve.recall.push_back(curve.positives == 0
                               ? 0.0
                               : static_cast<double>(tp) / static_cast<double>(curve.positives));
    curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  return curve;
}

double interpolated_ap(const PRCurve& curve, int points) {
  if (points != 11 && points != 40) throw InputError("interpolation must use 11 or 40 points");
  if (curve.positives == 0) return 0.0;
  // Running maximum of precision from the end gives the interpolated envelope.
  std::vector<double> envelope(curve.precision);
  for (std::size_t i = envelope.size(); i-- > 1;)
    envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  double sum = 0.0;
  for (int i = 0; i < points; ++i) {
    const double r = points == 11 ? i / 10.0 : (i + 1) / 40.0;
    const auto it = std::lower_bound(curve.recall.begin(), curve.recall.end(), r - 1e-12);
    if (it != curve.recall.end()) sum += envelope[static_cast<std::size_t>(it - curve.recall.begin())];
  }
  return sum / points;
}

double average_precision(std::span<const FrameEval> frames, double iou_thresh, IouMode mode,
                         int points, std::optional<Difficulty> tier) {
  return interpolated_ap(pr_curve(frames, iou_thresh, mode, tier), points);
}

double average_precision(std::span<const Detection> detections,
                         std::span<const GroundTruthBox> gts, double iou_thresh, IouMode mode,
                         int points) {
  const FrameEval frame{{detections.begin(), detections.end()}, {gts.begin(), gts.end()}};
  return average_precision(std::span<const FrameEval>(&frame, 1), iou_thresh, mode, points);
}

MethodRankings rank_methods(const PointCloud& masked_cloud, const GroundPlane& plane,
                            const Calibration& calib, ImageSize image, const UpmParams& params,
                            std::size_t max_budget) {
  MethodRankings out;
  const AnchorSet anchors = generate_anchors(plane, params.grid, calib, image);
  const XYZMap map = prepare_map(masked_cloud, calib, image);

  UpmParams p = params;
  p.top_k = std::max<std::size_t>(1, max_budget);
  const UpmResult upm = run_upm(anchors, map, calib, p);
  out.stats = upm.stats;
  auto& npcd_list = out.ranked[static_cast<int>(Method::Npcd)];
  for (const Proposal& q : upm.proposals)
    npcd_list.push_back(make_detection(q.box, q.density, calib, image));

  const auto take = [&](const std::vector<RankedBox>& boxes, std::vector<Detection>& dst) {
    const std::size_t n = std::min(max_budget, boxes.size());
    for (std::size_t i = 0; i < n; ++i)
      dst.push_back(make_detection(boxes[i].box, boxes[i].score, calib, image));
  };
  take(rank_pcd(anchors.anchors, masked_cloud, params.workers),
       out.ranked[static_cast<int>(Method::Pcd)]);
  take(baseline_inc(anchors.anchors), out.ranked[static_cast<int>(Method::Inc)]);
  return out;
}

std::vector<RecallCurve> ablation_curves(std::span<const AblationScene> scenes,
                                         const AblationOptions& options) {
  for (std::size_t i = 0; i < options.budgets.size(); ++i) {
    if (options.budgets[i] == 0) throw InputError("budgets must be at least 1");
    if (i > 0 && options.budgets[i] <= options.budgets[i - 1])
      throw InputError("budgets must be strictly increasing");
  }
  // Ground truth considered per scene.
  std::vector<std::vector<GroundTruthBox>> counted(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (const GroundTruthBox& g : scenes[s].gts)
      if (std::hypot(g.box.center.x(), g.box.center.z()) > options.min_gt_distance)
        counted[s].push_back(g);

  std::vector<RecallCurve> curves;
  for (Method m : options.methods) {
    for (IouMode mode : options.modes) {
      RecallCurve c{m, mode, options.iou, {}};
      for (std::size_t budget : options.budgets) {
        double sum = 0.0;
        std::size_t used = 0;
        for (std::size_t s = 0; s < scenes.size(); ++s) {
          if (options.min_gt_distance > 0.0 && counted[s].empty()) continue;
          // Match against every box so near objects still absorb their
          // proposals, then count only the boxes in range.
          const auto& all = scenes[s].gts;
          const auto matched =
              match_greedy(scenes[s].rankings[m], all, options.iou, mode, budget);
          std::size_t hits = 0, total = 0;
          for (std::size_t g = 0; g < all.size(); ++g) {
            if (std::hypot(all[g].box.center.x(), all[g].box.center.z()) <=
                options.min_gt_distance)
              continue;
            ++total;
            hits += matched[g] ? 1 : 0;
          }
          sum += total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
          ++used;
        }
        c.samples.emplace_back(budget, used == 0 ? 0.0 : sum / static_cast<double>(used));
      }
      curves.push_back(std::move(c));
    }
  }
  return curves;
}

void write_recall_csv(std::ostream& out, std::span<const RecallCurve> curves) {
  out << "method,mode,iou,budget,recall\n";
  for (const RecallCurve& c : curves)
    for (const auto& [budget, recall] : c.samples)
      out << fmt::format("{},{},{:g},{},{:.6f}\n", to_string(c.method), to_string(c.mode), c.iou,
                         budget, recall);
}

}  // namespace upm
