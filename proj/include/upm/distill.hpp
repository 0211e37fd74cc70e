// SPDX-License-Identifier: Apache-2.0
//
// Teacher-side targets for cross-modal distillation: confusion-zone masking,
// rectified soft labels, the rectified cross-entropy and the multi-bin
// rotation read-out. The student network itself lives elsewhere; this module
// produces and checks the numbers it would train on.
#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "upm/geometry.hpp"
#include "upm/ingest.hpp"
#include "upm/synthetic.hpp"

namespace upm {

struct RectifyParams {
  double s_t = 0.6;  // soft threshold
  double k = 50.0;   // slope
  double s_l = 0.4;  // confusion zone [s_l, s_h]
  double s_h = 0.6;
};

/// Throws InputError unless 0 <= s_l <= s_h <= 1, s_t in [0, 1] and k > 0.
void validate(const RectifyParams& params);

inline constexpr int kRotationBins = 16;
using RotationBins = std::array<double, kRotationBins>;

struct TeacherScore {
  double s = 0.0;
  RotationBins rotation_bins{};
};

/// Scores a proposal against the scene it was bound to at construction.
class TeacherScorer {
 public:
  virtual ~TeacherScorer() = default;
  virtual TeacherScore score(const Box3D& proposal) const = 0;
};

/// (1 + e^{(s_t - 1) k}) / (1 + e^{(s_t - s) k}). Throws for s outside [0, 1].
double rectified_label(double s, const RectifyParams& params);

/// True when the teacher score falls in the closed confusion zone.
inline bool in_confusion_zone(double s, const RectifyParams& p) {
  return s >= p.s_l && s <= p.s_h;
}

inline constexpr double kStudentClamp = 1e-7;

struct LossTerm {
  double loss = 0.0;
  double gradient = 0.0;  // d loss / d s_student
  bool masked = false;
};

/// Cross-entropy against the rectified label, zero inside the confusion zone.
/// The student score is clamped to [1e-7, 1 - 1e-7].
LossTerm rectified_ce(double s_teacher, double s_student, const RectifyParams& params);
double rectified_ce_loss(double s_teacher, double s_student, const RectifyParams& params);

/// Bin i is centered at 2*pi*i/16 + pi/16.
const RotationBins& bin_centers();

/// Circular mean of the bin centers weighted by `bins`, in (-pi, pi]. Throws
/// InputError for negative or all-zero weights, or when the weights cancel.
double rotation_expectation(std::span<const double, kRotationBins> bins);

/// Geometric stand-in for a trained teacher: s = sqrt(best 3D IoU with any
/// ground-truth box), rotation bins from a von Mises profile around that
/// box's yaw (the proposal's own yaw when nothing overlaps).
class MockTeacher final : public TeacherScorer {
 public:
  explicit MockTeacher(std::vector<GroundTruthBox> ground_truth, double kappa = 8.0);
  TeacherScore score(const Box3D& proposal) const override;

 private:
  std::vector<GroundTruthBox> gt_;
  double kappa_;
};

TeacherScore mock_teacher(const Box3D& proposal, const SyntheticScene& scene);

/// von Mises weights exp(kappa cos(theta_i - yaw)), normalized.
RotationBins von_mises_bins(double yaw, double kappa);

enum class LabelKind { Negative, Masked, Positive };

struct LabeledProposal {
  std::size_t id = 0;
  Box3D box;
  double s = 0.0;
  LabelKind kind = LabelKind::Masked;
  double target = 0.0;  // rectified label; 0 when masked
  double yaw = 0.0;     // rotation expectation of the teacher bins
  bool masked() const { return kind == LabelKind::Masked; }
};

struct LabelBatch {
  std::vector<LabeledProposal> items;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t masked = 0;
};

/// Teacher targets for every proposal, in input order.
LabelBatch label_batch(std::span<const Box3D> proposals, const TeacherScorer& scorer,
                       const RectifyParams& params, unsigned workers = 1);

/// Tab-separated: id, raw s, masked flag, target, yaw.
void write_label_batch(std::ostream& out, const LabelBatch& batch);

/// Mean loss over unmasked items; masked items are left out of the mean.
/// `student` holds one prediction per item.
double batch_loss(const LabelBatch& batch, std::span<const double> student,
                  const RectifyParams& params);

}  // namespace upm
