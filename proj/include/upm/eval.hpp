// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upm/geometry.hpp"
#include "upm/ingest.hpp"
#include "upm/proposal.hpp"

namespace upm {

enum class IouMode { Image2D, Bev, Box3D };

const char* to_string(IouMode m);  // "2d", "bev", "3d"
IouMode parse_iou_mode(const std::string& s);

struct Detection {
  Box3D box;
  std::optional<Rect2D> image_box;  // needed for 2D matching
  double score = 0.0;
};

/// Projects the box for 2D matching; an unprojectable box never matches in 2D.
Detection make_detection(const Box3D& box, double score, const Calibration& calib,
                         ImageSize image);

double overlap(const Detection& det, const GroundTruthBox& gt, IouMode mode);

/// Greedy one-to-one matching of the first `budget` detections in rank order:
/// each takes the unmatched ground truth with the highest IoU >= threshold.
/// Returns the matched flag per ground-truth box.
std::vector<bool> match_greedy(std::span<const Detection> ranked,
                               std::span<const GroundTruthBox> gts, double iou_thresh,
                               IouMode mode, std::size_t budget);

/// Matched fraction of `gts`; 1 for an empty set.
double recall_at(std::span<const Detection> ranked, std::span<const GroundTruthBox> gts,
                 double iou_thresh, IouMode mode, std::size_t budget);

struct PRCurve {
  std::vector<double> recall;     // non-decreasing
  std::vector<double> precision;
  std::size_t positives = 0;
};

/// Detections and ground truth of one frame.
struct FrameEval {
  std::vector<Detection> detections;
  std::vector<GroundTruthBox> gts;
};

/// Ground truth up to `tier` counts as positive (tiers are cumulative);
/// harder boxes and Unknown ones are ignored, as are detections that only
/// match ignored boxes. Without a tier every box counts.
PRCurve pr_curve(std::span<const FrameEval> frames, double iou_thresh, IouMode mode,
                 std::optional<Difficulty> tier = std::nullopt);

/// Mean interpolated precision at 11 recall points {0, 0.1, .., 1} or 40
/// points {1/40, .., 1}. Zero when there are no positives.
double interpolated_ap(const PRCurve& curve, int points = 11);

double average_precision(std::span<const FrameEval> frames, double iou_thresh, IouMode mode,
                         int points = 11, std::optional<Difficulty> tier = std::nullopt);
double average_precision(std::span<const Detection> detections,
                         std::span<const GroundTruthBox> gts, double iou_thresh, IouMode mode,
                         int points = 11);

enum class Method { Npcd = 0, Pcd = 1, Inc = 2 };
inline constexpr std::array<Method, 3> kAllMethods{Method::Npcd, Method::Pcd, Method::Inc};

const char* to_string(Method m);  // "NPCD", "PCD", "INC"
Method parse_method(const std::string& s);

/// Ranked proposals of all three methods on one frame, each truncated to
/// `max_budget`. All methods share the same anchors.
struct MethodRankings {
  std::array<std::vector<Detection>, 3> ranked;
  UpmStats stats;
  const std::vector<Detection>& operator[](Method m) const {
    return ranked[static_cast<int>(m)];
  }
};

MethodRankings rank_methods(const PointCloud& masked_cloud, const GroundPlane& plane,
                            const Calibration& calib, ImageSize image, const UpmParams& params,
                            std::size_t max_budget);

struct AblationScene {
  std::vector<GroundTruthBox> gts;
  MethodRankings rankings;
};

struct RecallCurve {
  Method method = Method::Npcd;
  IouMode mode = IouMode::Box3D;
  double iou = 0.1;
  std::vector<std::pair<std::size_t, double>> samples;  // (budget, recall)
};

struct AblationOptions {
  std::vector<std::size_t> budgets{10, 50, 100};
  double iou = 0.1;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  std::vector<IouMode> modes{IouMode::Image2D, IouMode::Box3D};
  /// Only ground truth farther than this (BEV distance) counts; scenes with
  /// no such box are left out of the mean.
  double min_gt_distance = 0.0;
};

/// Mean recall over scenes per (method, mode, budget). Budgets must be
/// strictly increasing and >= 1.
std::vector<RecallCurve> ablation_curves(std::span<const AblationScene> scenes,
                                         const AblationOptions& options);

/// method,mode,iou,budget,recall
void write_recall_csv(std::ostream& out, std::span<const RecallCurve> curves);

}  // namespace upm
