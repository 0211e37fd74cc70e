// SPDX-License-Identifier: Apache-2.0
#include "upm/distill.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace upm {

void validate(const RectifyParams& p) {
  if (!(p.k > 0.0) || !std::isfinite(p.k)) throw InputError("k must be positive");
  if (!(p.s_t >= 0.0 && p.s_t <= 1.0)) throw InputError("s_t must lie in [0, 1]");
  if (!(p.s_l >= 0.0 && p.s_l <= p.s_h && p.s_h <= 1.0))
    throw InputError("confusion zone must satisfy 0 <= s_l <= s_h <= 1");
}

double rectified_label(double s, const RectifyParams& p) {
  if (!(s >= 0.0 && s <= 1.0)) throw InputError(fmt::format("teacher score {} outside [0, 1]", s));
  // At s == 1 both exponents are the same expression, so the ratio is exactly 1.
  return (1.0 + std::exp((p.s_t - 1.0) * p.k)) / (1.0 + std::exp((p.s_t - s) * p.k));
}

LossTerm rectified_ce(double s_teacher, double s_student, const RectifyParams& p) {
  if (!(s_teacher >= 0.0 && s_teacher <= 1.0))
    throw InputError(fmt::format("teacher score {} outside [0, 1]", s_teacher));
  LossTerm t;
  if (in_confusion_zone(s_teacher, p)) {
    t.masked = true;
    return t;
  }
  const double target = rectified_label(s_teacher, p);
  const double x = std::clamp(s_student, kStudentClamp, 1.0 - kStudentClamp);
  t.loss = -(target * std::log(x) + (1.0 - target) * std::log1p(-x));
  t.gradient = (x - target) / (x * (1.0 - x));
  return t;
}

double rectified_ce_loss(double s_teacher, double s_student, const RectifyParams& p) {
  return rectified_ce(s_teacher, s_student, p).loss;
}

const RotationBins& bin_centers() {
  static const RotationBins centers = [] {
    RotationBins c{};
    for (int i = 0; i < kRotationBins; ++i)
      c[i] = 2.0 * kPi * i / kRotationBins + kPi / kRotationBins;
    return c;
  }();
  return centers;
}

double rotation_expectation(std::span<const double, kRotationBins> bins) {
  double total = 0.0, sx = 0.0, sy = 0.0;
  const RotationBins& theta = bin_centers();
  for (int i = 0; i < kRotationBins; ++i) {
    if (!(bins[i] >= 0.0)) throw InputError("rotation bin weights must be nonnegative");
    total += bins[i];
    sx += bins[i] * std::cos(theta[i]);
    sy += bins[i] * std::sin(theta[i]);
  }
  if (!(total > 0.0)) throw InputError("rotation bins are all zero");
  if (std::hypot(sx, sy) <= 1e-12 * total)
    throw InputError("rotation bins have no dominant direction");
  const double a = std::atan2(sy, sx);
  return a <= -kPi ? kPi : a;
}

RotationBins von_mises_bins(double yaw, double kappa) {
  RotationBins w{};
  const RotationBins& theta = bin_centers();
  double total = 0.0;
  for (int i = 0; i < kRotationBins; ++i) {
    // Shift by kappa so the peak weight is 1 and nothing overflows.
    w[i] = std::exp(kappa * (std::cos(theta[i] - yaw) - 1.0));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

MockTeacher::MockTeacher(std::vector<GroundTruthBox> ground_truth, double kappa)
    : gt_(std::move(ground_truth)), kappa_(kappa) {}

TeacherScore MockTeacher::score(const Box3D& proposal) const {
  double best = 0.0;
  double yaw = proposal.yaw;
  for (const GroundTruthBox& g : gt_) {
    const double iou = iou_3d(proposal, g.box);
    if (iou > best) {
      best = iou;
      yaw = g.box.yaw;
    }
  }
  TeacherScore t;
  t.s = std::sqrt(std::clamp(best, 0.0, 1.0));
  t.rotation_bins = von_mises_bins(yaw, kappa_);
  return t;
}

TeacherScore mock_teacher(const Box3D& proposal, const SyntheticScene& scene) {
  return MockTeacher(scene.objects).score(proposal);
}

LabelBatch label_batch(std::span<const Box3D> proposals, const TeacherScorer& scorer,
                       const RectifyParams& params, unsigned workers) {
  validate(params);
  LabelBatch batch;
  batch.items.resize(proposals.size());
  parallel_for(proposals.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const TeacherScore t = scorer.score(proposals[i]);
      LabeledProposal& item = batch.items[i];
      item.id = i;
      item.box = proposals[i];
      item.s = t.s;
      item.yaw = rotation_expectation(t.rotation_bins);
      if (in_confusion_zone(t.s, params)) {
        item.kind = LabelKind::Masked;
      } else {
        item.kind = t.s > params.s_h ? LabelKind::Positive : LabelKind::Negative;
        item.target = rectified_label(t.s, params);
      }
    }
  });
  for (const LabeledProposal& item : batch.items) {
    switch (item.kind) {
      case LabelKind::Positive: ++batch.positives; break;
      case LabelKind::Negative: ++batch.negatives; break;
      case LabelKind::Masked: ++batch.masked; break;
    }
  }
  return batch;
}

void write_label_batch(std::ostream& out, const LabelBatch& batch) {
  for (const LabeledProposal& item : batch.items) {
    out << fmt::format("{}\t{:.9f}\t{}\t{:.9f}\t{:.9f}\n", item.id, item.s,
                       item.masked() ? 1 : 0, item.target, item.yaw);
  }
}

double batch_loss(const LabelBatch& batch, std::span<const double> student,
                  const RectifyParams& params) {
  if (student.size() != batch.items.size())
    throw InputError("one student prediction per item is required");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    const LossTerm t = rectified_ce(batch.items[i].s, student[i], params);
    if (t.masked) continue;
    sum += t.loss;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace upm
