// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "upm/eval.hpp"

using namespace upm;

namespace {

GroundTruthBox gt_at(double x, double z, Difficulty d = Difficulty::Easy) {
  GroundTruthBox g;
  g.box.center = Vec3(x, 0.9, z);
  g.box.half_extents = Vec3(1.9, 0.75, 0.8);
  g.image_box = Rect2D{x * 10.0, 0.0, x * 10.0 + 20.0, 20.0};
  g.difficulty = d;
  return g;
}

Detection det_of(const GroundTruthBox& g, double score, double dx = 0.0) {
  Detection d;
  d.box = g.box;
  d.box.center.x() += dx;
  d.image_box = Rect2D{g.image_box.u_min + dx * 10.0, g.image_box.v_min,
                       g.image_box.u_max + dx * 10.0, g.image_box.v_max};
  d.score = score;
  return d;
}

}  // namespace

TEST(Recall, PerfectProposals) {
  const std::vector<GroundTruthBox> gts{gt_at(0, 10), gt_at(6, 20), gt_at(-6, 30)};
  std::vector<Detection> dets;
  for (const auto& g : gts) dets.push_back(det_of(g, 1.0));
  for (IouMode m : {IouMode::Image2D, IouMode::Bev, IouMode::Box3D})
    for (double t : {0.1, 0.5, 0.99}) EXPECT_DOUBLE_EQ(recall_at(dets, gts, t, m, 10), 1.0);
}

TEST(Recall, NoOverlapIsZero) {
  const std::vector<GroundTruthBox> gts{gt_at(0, 10)};
  const std::vector<Detection> dets{det_of(gt_at(20, 60), 1.0)};
  EXPECT_EQ(recall_at(dets, gts, 0.1, IouMode::Box3D, 5), 0.0);
}

TEST(Recall, EmptyGroundTruthIsOne) {
  EXPECT_EQ(recall_at({}, {}, 0.5, IouMode::Bev, 1), 1.0);
}

TEST(Recall, BudgetRespected) {
  const std::vector<GroundTruthBox> gts{gt_at(0, 10), gt_at(8, 10)};
  const std::vector<Detection> dets{det_of(gts[0], 0.9), det_of(gts[1], 0.8)};
  EXPECT_DOUBLE_EQ(recall_at(dets, gts, 0.5, IouMode::Box3D, 1), 0.5);
  EXPECT_THROW(recall_at(dets, gts, 0.5, IouMode::Box3D, 0), InputError);
}

TEST(Recall, NoDoubleMatching) {
  const std::vector<GroundTruthBox> gts{gt_at(0, 10)};
  const std::vector<Detection> dets{det_of(gts[0], 0.9), det_of(gts[0], 0.8)};
  const auto matched = match_greedy(dets, gts, 0.5, IouMode::Box3D, 2);
  EXPECT_EQ(std::count(matched.begin(), matched.end(), true), 1);
}

namespace {

// Largest matching with IoU >= t using any subset of the first n
// detections, by exhaustive search over GT assignments.
int best_assignment(const std::vector<std::vector<double>>& iou, std::size_t g, double t,
                    std::vector<bool>& used) {
  if (g == iou.size()) return 0;
  int best = best_assignment(iou, g + 1, t, used);
  for (std::size_t d = 0; d < iou[g].size(); ++d) {
    if (used[d] || iou[g][d] < t) continue;
    used[d] = true;
    best = std::max(best, 1 + best_assignment(iou, g + 1, t, used));
    used[d] = false;
  }
  return best;
}

}  // namespace

TEST(Recall, GreedyEqualsOptimalOnSparseScenes) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> x(-20, 20), z(5, 60), jitter(-1.2, 1.2);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<GroundTruthBox> gts;
    while (gts.size() < 5) {
      const GroundTruthBox g = gt_at(x(rng), z(rng));
      bool clear = true;
      for (const auto& o : gts) clear = clear && iou_bev(o.box, g.box) == 0.0 &&
                                        (o.box.center - g.box.center).norm() > 8.0;
      if (clear) gts.push_back(g);
    }
    std::vector<Detection> dets;
    for (int i = 0; i < 20; ++i) {
      Detection d = det_of(gts[static_cast<std::size_t>(i % 5)], 1.0 - i * 0.01);
      d.box.center.x() += jitter(rng);
      d.box.center.z() += jitter(rng);
      dets.push_back(d);
    }
    std::vector<std::vector<double>> iou(5, std::vector<double>(20));
    for (std::size_t g = 0; g < 5; ++g)
      for (std::size_t d = 0; d < 20; ++d) iou[g][d] = iou_3d(dets[d].box, gts[g].box);
    std::vector<bool> used(20, false);
    const int optimal = best_assignment(iou, 0, 0.3, used);
    const double greedy = recall_at(dets, gts, 0.3, IouMode::Box3D, 20);
    EXPECT_DOUBLE_EQ(greedy, optimal / 5.0);
    ++compared;
  }
  EXPECT_EQ(compared, 200);
}

TEST(Recall, MonotoneInBudgetAndThreshold) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> x(-20, 20), z(5, 60);
  std::vector<GroundTruthBox> gts;
  for (int i = 0; i < 6; ++i) gts.push_back(gt_at(x(rng), z(rng)));
  std::vector<Detection> dets;
  for (int i = 0; i < 50; ++i) dets.push_back(det_of(gt_at(x(rng), z(rng)), 1.0));
  for (int i = 0; i < 6; ++i) dets.push_back(det_of(gts[static_cast<std::size_t>(i)], 1.0, 0.7));
  double prev = 0.0;
  for (std::size_t n = 1; n <= dets.size(); ++n) {
    const double r = recall_at(dets, gts, 0.1, IouMode::Bev, n);
    EXPECT_GE(r, prev);
    prev = r;
  }
  double prev_t = 1.0;
  for (double t = 0.05; t < 1.0; t += 0.05) {
    const double r = recall_at(dets, gts, t, IouMode::Bev, dets.size());
    EXPECT_LE(r, prev_t);
    prev_t = r;
  }
}

TEST(AveragePrecision, PerfectDetector) {
  const std::vector<GroundTruthBox> gts{gt_at(0, 10), gt_at(6, 20), gt_at(-6, 30)};
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < gts.size(); ++i) dets.push_back(det_of(gts[i], 1.0 - 0.1 * i));
  EXPECT_DOUBLE_EQ(average_precision(dets, gts, 0.7, IouMode::Box3D), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(dets, gts, 0.7, IouMode::Box3D, 40), 1.0);
}

TEST(AveragePrecision, AllFalse) {
  const std::vector<GroundTruthBox> gts{gt_at(0, 10)};
  const std::vector<Detection> dets{det_of(gt_at(20, 50), 0.9), det_of(gt_at(-20, 50), 0.8)};
  EXPECT_EQ(average_precision(dets, gts, 0.5, IouMode::Box3D), 0.0);
}

TEST(AveragePrecision, HandComputedStaircase) {
  // Detections by score: TP, FP, TP, FP, TP over 3 GT. The PR points are
  // (1/3, 1), (1/3, 1/2), (2/3, 2/3), (2/3, 1/2), (1, 3/5); the interpolated
  // precision is 1 at recall 0..0.3, 2/3 at 0.4..0.6 and 3/5 at 0.7..1.0,
  // so AP11 = (4 + 3 * 2/3 + 4 * 3/5) / 11 = 8.4 / 11.
  const std::vector<GroundTruthBox> gts{gt_at(0, 10), gt_at(6, 20), gt_at(-6, 30)};
  const GroundTruthBox nowhere = gt_at(25, 65);
  const std::vector<Detection> dets{det_of(gts[0], 0.9), det_of(nowhere, 0.8),
                                    det_of(gts[1], 0.7), det_of(nowhere, 0.6),
                                    det_of(gts[2], 0.5)};
  EXPECT_NEAR(average_precision(dets, gts, 0.5, IouMode::Box3D), 8.4 / 11.0, 1e-12);
  const PRCurve c = pr_curve(std::vector<FrameEval>{{dets, gts}}, 0.5, IouMode::Box3D);
  ASSERT_EQ(c.recall.size(), 5u);
  EXPECT_NEAR(c.precision[3], 0.5, 1e-12);
}

TEST(AveragePrecision, MonotoneScoreTransformInvariant) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> x(-20, 20), z(5, 60), s(0.0, 1.0);
  std::vector<GroundTruthBox> gts;
  for (int i = 0; i < 5; ++i) gts.push_back(gt_at(x(rng), z(rng)));
  std::vector<Detection> dets;
  for (int i = 0; i < 5; ++i) dets.push_back(det_of(gts[static_cast<std::size_t>(i)], s(rng), 0.4));
  for (int i = 0; i < 10; ++i) dets.push_back(det_of(gt_at(x(rng), z(rng)), s(rng)));
  std::vector<Detection> warped = dets;
  for (Detection& d : warped) d.score = std::exp(3.0 * d.score) - 7.0;
  for (int pts : {11, 40})
    EXPECT_DOUBLE_EQ(average_precision(dets, gts, 0.3, IouMode::Bev, pts),
                     average_precision(warped, gts, 0.3, IouMode::Bev, pts));
}

TEST(AveragePrecision, HarderBoxesIgnoredInEasyTier) {
  const std::vector<GroundTruthBox> gts{gt_at(0, 10, Difficulty::Easy),
                                        gt_at(8, 20, Difficulty::Hard)};
  // The hard box is detected first; in the easy tier that detection is
  // neither a hit nor a false alarm.
  const std::vector<Detection> dets{det_of(gts[1], 0.9), det_of(gts[0], 0.8)};
  const std::vector<FrameEval> frames{{dets, gts}};
  EXPECT_DOUBLE_EQ(average_precision(frames, 0.5, IouMode::Box3D, 11, Difficulty::Easy), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(frames, 0.5, IouMode::Box3D, 11, Difficulty::Hard), 1.0);
  const std::vector<Detection> only_easy_missed{det_of(gts[1], 0.9)};
  EXPECT_DOUBLE_EQ(
      average_precision(std::vector<FrameEval>{{only_easy_missed, gts}}, 0.5, IouMode::Box3D, 11,
                        Difficulty::Easy),
      0.0);
}

TEST(Ablation, CurvesAndCsv) {
  AblationScene s;
  s.gts = {gt_at(0, 10), gt_at(6, 45)};
  auto& npcd = s.rankings.ranked[static_cast<int>(Method::Npcd)];
  npcd = {det_of(s.gts[1], 0.9), det_of(s.gts[0], 0.8)};
  auto& pcd = s.rankings.ranked[static_cast<int>(Method::Pcd)];
  pcd = {det_of(s.gts[0], 50), det_of(gt_at(-10, 20), 40), det_of(s.gts[1], 5)};
  AblationOptions o;
  o.budgets = {1, 2, 3};
  o.modes = {IouMode::Box3D};
  const std::vector<AblationScene> scenes{s};
  const auto curves = ablation_curves(scenes, o);
  ASSERT_EQ(curves.size(), 3u);
  EXPECT_DOUBLE_EQ(curves[0].samples[0].second, 0.5);
  EXPECT_DOUBLE_EQ(curves[0].samples[1].second, 1.0);
  EXPECT_DOUBLE_EQ(curves[1].samples[1].second, 0.5);
  EXPECT_DOUBLE_EQ(curves[2].samples[2].second, 0.0);

  o.min_gt_distance = 40.0;
  const auto far = ablation_curves(scenes, o);
  EXPECT_DOUBLE_EQ(far[0].samples[0].second, 1.0);
  EXPECT_DOUBLE_EQ(far[1].samples[1].second, 0.0);

  std::ostringstream csv;
  write_recall_csv(csv, curves);
  const std::string text = csv.str();
  EXPECT_EQ(text.rfind("method,mode,iou,budget,recall\n", 0), 0u);
  EXPECT_NE(text.find("NPCD,3d,0.1,1,0.500000"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 10);

  o.budgets = {5, 5};
  EXPECT_THROW(ablation_curves(scenes, o), InputError);
}

TEST(Ablation, IncAtFullBudgetIsCeiling) {
  // INC keeps every anchor, so at full budget no method can beat it.
  AblationScene s;
  s.gts = {gt_at(0, 10), gt_at(6, 45)};
  auto& inc = s.rankings.ranked[static_cast<int>(Method::Inc)];
  inc = {det_of(gt_at(-10, 20), 0), det_of(s.gts[0], 0, 0.3), det_of(s.gts[1], 0, 0.3)};
  s.rankings.ranked[static_cast<int>(Method::Npcd)] = {inc[2]};
  AblationOptions o;
  o.budgets = {3};
  o.modes = {IouMode::Bev};
  const auto curves = ablation_curves(std::vector<AblationScene>{s}, o);
  EXPECT_DOUBLE_EQ(curves[2].samples[0].second, 1.0);
  EXPECT_LE(curves[0].samples[0].second, curves[2].samples[0].second);
}

TEST(Eval, ParseNames) {
  EXPECT_EQ(parse_iou_mode("bev"), IouMode::Bev);
  EXPECT_EQ(parse_method("PCD"), Method::Pcd);
  EXPECT_THROW(parse_iou_mode("4d"), InputError);
  EXPECT_THROW(parse_method("abc"), InputError);
}
