// SPDX-License-Identifier: Apache-2.0
//
// Unsupervised 3D proposals from normalized point-cloud density.
//
// Every anchor on a ground-plane grid is projected into the front-view XYZ
// map, its bounding rectangle is resampled to a fixed H_c x H_c patch, and the
// fraction of patch points that fall strictly inside the anchor (ground points
// excluded) is the anchor's density. Because the patch size does not depend
// on how many pixels the anchor covers, the density does not fall off with
// distance the way raw point counts do. Anchors above the density threshold
// are kept when a (1 + eps) enlargement gains no extra points, shifted so their
// faces touch the outermost contained points, and ranked by density.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upm/frontview.hpp"
#include "upm/geometry.hpp"
#include "upm/ground.hpp"
#include "upm/ingest.hpp"

namespace upm {

struct AnchorTemplate {
  std::string label = "Car";
  Vec3 half_extents{1.95, 0.78, 0.80};  // 3.9 x 1.56 x 1.6 m (l, h, w)
};

struct AnchorGrid {
  double spacing = 0.2;
  double z_min = 0.0;
  double z_max = 70.0;
  double x_min = -35.0;
  double x_max = 35.0;
  std::vector<double> yaws{0.0, kPi / 2.0};
  std::vector<AnchorTemplate> templates{AnchorTemplate{}};

  /// ceil(span / spacing) along each axis.
  std::size_t cells_z() const;
  std::size_t cells_x() const;
  /// Anchors per template before frustum culling.
  std::size_t count_per_template() const { return cells_z() * cells_x() * yaws.size(); }
};

struct Anchor {
  Box3D box;
  Rect2D rect;  // front-view projection
  std::size_t index = 0;
  int template_id = 0;
};

struct AnchorSet {
  std::vector<Anchor> anchors;  // after frustum culling, in index order
  std::size_t total_before_culling = 0;
};

/// Box of the given size and yaw whose bottom-face center is the plane point
/// above (x, z).
Box3D place_on_plane(double x, double z, double yaw, const Vec3& half_extents,
                     const GroundPlane& plane);

/// One anchor per (template, grid cell, yaw); cells are centered at
/// min + (i + 0.5) * spacing. Anchors that do not project into the image are
/// dropped.
AnchorSet generate_anchors(const GroundPlane& plane, const AnchorGrid& grid,
                           const Calibration& calib, ImageSize image);

struct DensityResult {
  double density = 0.0;
  int n_in = 0;
  std::vector<std::uint8_t> inside;  // H_c x H_c boolean matrix, row-major
};

/// Normalized density of one anchor. Empty when the anchor does not project.
std::optional<DensityResult> npcd(const Box3D& anchor, const XYZMap& map,
                                  const Calibration& calib, int patch_size);

struct Proposal {
  Box3D box;
  double density = 0.0;
  int n_in = 0;
  bool aligned = false;
  std::size_t anchor_index = 0;
  int template_id = 0;
};

/// Keeps proposals with density >= delta, preserving input order.
std::vector<Proposal> filter_by_density(std::span<const Proposal> scored, double delta);

/// Scores every anchor on the map and keeps those with density >= delta.
/// Output is in anchor order regardless of `workers`.
std::vector<Proposal> select(std::span<const Anchor> anchors, const XYZMap& map,
                             int patch_size, double delta, unsigned workers = 1);

struct EnlargementCheck {
  bool keep = false;
  int extra_points = 0;
};

/// Scales the half-extents by (1 + eps), resamples the enlarged projection,
/// and counts patch points inside the enlarged box but not the original.
EnlargementCheck check_enlargement(const Proposal& proposal, const XYZMap& map,
                                   const Calibration& calib, int patch_size, double eps,
                                   int slack = 0);
bool enlargement_filter(const Proposal& proposal, const XYZMap& map,
                        const Calibration& calib, int patch_size, double eps,
                        int slack = 0);

struct AlignTrace {
  Proposal result;
  /// Extreme contained point per local axis (x, y, z) and the applied shift.
  std::array<std::optional<Vec3>, 3> extreme_points;
  Vec3 shifts = Vec3::Zero();
};

/// Shifts the box along each local axis so the contained point with the
/// largest |q_a| lands on the face. All three shifts use the containment set
/// of the unshifted box.
AlignTrace align_traced(const Proposal& proposal, const XYZMap& map,
                        const Calibration& calib, int patch_size);
Proposal align(const Proposal& proposal, const XYZMap& map, const Calibration& calib,
               int patch_size);

/// Sorts by density (desc), distance to the sensor, anchor index; optional
/// greedy BEV NMS; truncates to k.
std::vector<Proposal> rank_and_budget(std::vector<Proposal> proposals, std::size_t k,
                                      std::optional<double> nms_iou = std::nullopt);

/// Anchor with a baseline ranking score.
struct RankedBox {
  Box3D box;
  double score = 0.0;
  std::size_t anchor_index = 0;
  int template_id = 0;
};

/// Raw count of non-ground points strictly inside the box.
int baseline_pcd(const Box3D& anchor, const PointCloud& cloud);

/// PCD baseline over all anchors, ranked by count (desc), distance, index.
std::vector<RankedBox> rank_pcd(std::span<const Anchor> anchors, const PointCloud& cloud,
                                unsigned workers = 1);

/// INC baseline: every anchor, ranked by distance then index.
std::vector<RankedBox> baseline_inc(std::span<const Anchor> anchors);

struct UpmParams {
  AnchorGrid grid;
  int patch_size = 32;
  double density_threshold = 0.5;
  double enlarge_ratio = 0.2;
  int enlarge_slack = 0;
  std::size_t top_k = 512;
  std::optional<double> nms_iou;
  unsigned workers = 1;
};

struct UpmStats {
  std::size_t anchors_total = 0;
  std::size_t anchors_in_frustum = 0;
  std::size_t after_selection = 0;
  std::size_t after_enlargement = 0;
  std::size_t proposals = 0;
};

struct UpmResult {
  std::vector<Proposal> proposals;
  UpmStats stats;
};

/// Selection, enlargement filtering, alignment and ranking on a prepared
/// (inpainted) map.
UpmResult run_upm(const AnchorSet& anchors, const XYZMap& map, const Calibration& calib,
                  const UpmParams& params);

/// Full pipeline from a ground-masked cloud.
UpmResult propose(const PointCloud& masked_cloud, const GroundPlane& plane,
                  const Calibration& calib, ImageSize image, const UpmParams& params);

/// Front-view map ready for density scoring (built and inpainted). Empty
/// (0 x 0) when the cloud projects to no pixel.
XYZMap prepare_map(const PointCloud& masked_cloud, const Calibration& calib, ImageSize image);

}  // namespace upm
