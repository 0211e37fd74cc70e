// SPDX-License-Identifier: Apache-2.0
#include "upm/proposal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace upm {

std::size_t AnchorGrid::cells_z() const {
  if (!(spacing > 0.0) || !(z_max > z_min)) return 0;
  // The epsilon keeps 70 / 0.2 from rounding up to 351.
  return static_cast<std::size_t>(std::ceil((z_max - z_min) / spacing - 1e-9));
}

std::size_t AnchorGrid::cells_x() const {
  if (!(spacing > 0.0) || !(x_max > x_min)) return 0;
  return static_cast<std::size_t>(std::ceil((x_max - x_min) / spacing - 1e-9));
}

Box3D place_on_plane(double x, double z, double yaw, const Vec3& half_extents,
                     const GroundPlane& plane) {
  Box3D b;
  b.half_extents = half_extents;
  b.yaw = normalize_yaw(yaw);
  b.center = Vec3(x, plane.y_at(x, z) - half_extents.y(), z);
  return b;
}

AnchorSet generate_anchors(const GroundPlane& plane, const AnchorGrid& grid,
                           const Calibration& calib, ImageSize image) {
  AnchorSet set;
  const std::size_t nz = grid.cells_z();
  const std::size_t nx = grid.cells_x();
  const std::size_t ny = grid.yaws.size();
  set.total_before_culling = grid.templates.size() * nz * nx * ny;
  for (std::size_t t = 0; t < grid.templates.size(); ++t) {
    const Vec3& half = grid.templates[t].half_extents;
    for (std::size_t iz = 0; iz < nz; ++iz) {
      const double z = grid.z_min + (static_cast<double>(iz) + 0.5) * grid.spacing;
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double x = grid.x_min + (static_cast<double>(ix) + 0.5) * grid.spacing;
        for (std::size_t iy = 0; iy < ny; ++iy) {
          Anchor a;
          a.box = place_on_plane(x, z, grid.yaws[iy], half, plane);
          const auto rect = project_box_to_image(a.box, calib, image);
          if (!rect) continue;
          a.rect = *rect;
          a.index = ((t * nz + iz) * nx + ix) * ny + iy;
          a.template_id = static_cast<int>(t);
          set.anchors.push_back(a);
        }
      }
    }
  }
  return set;
}

namespace {

// Counts non-ground patch points strictly inside `box`. With need > 0 the
// scan stops and returns -1 as soon as `need` can no longer be reached.
// The local coordinates are computed exactly as to_local() does.
int count_inside(const Box3D& box, const Rect2D& rect, const XYZMap& map, int h,
                 int need, std::uint8_t* mask) {
  thread_local std::vector<std::size_t> rows;
  thread_local std::vector<std::size_t> cols;
  rows.resize(static_cast<std::size_t>(h));
  cols.resize(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    rows[i] = static_cast<std::size_t>(sample_pixel(rect.v_min, rect.v_max, i, h, map.height)) *
              static_cast<std::size_t>(map.width);
    cols[i] = static_cast<std::size_t>(sample_pixel(rect.u_min, rect.u_max, i, h, map.width));
  }
  const Vec3 ax = box.axis_x();
  const Vec3 az = box.axis_z();
  const double cx = box.center.x(), cy = box.center.y(), cz = box.center.z();
  const double lx = box.half_extents.x(), ly = box.half_extents.y(),
               lz = box.half_extents.z();
  const Vec3* xyz = map.xyz.data();
  const std::uint8_t* ground = map.ground.data();
  const std::uint8_t* valid = map.valid.data();
  int n = 0;
  int remaining = h * h;
  for (int i = 0; i < h; ++i) {
    const std::size_t base = rows[i];
    for (int j = 0; j < h; ++j) {
      const std::size_t k = base + cols[j];
      bool in = false;
      if (!ground[k] && valid[k]) {
        const Vec3& p = xyz[k];
        const double dx = p.x() - cx, dy = p.y() - cy, dz = p.z() - cz;
        const double qx = dx * ax.x() + dz * ax.z();
        const double qz = dx * az.x() + dz * az.z();
        in = std::abs(qx) < lx && std::abs(dy) < ly && std::abs(qz) < lz;
      }
      n += in;
      if (mask) mask[i * h + j] = in;
    }
    remaining -= h;
    if (need > 0 && n + remaining < need) return -1;
  }
  return n;
}

// Smallest n with n / h^2 >= delta under floating-point division.
int min_count_for(double delta, int h) {
  const int total = h * h;
  const double denom = static_cast<double>(total);
  int need = static_cast<int>(std::ceil(delta * denom));
  need = std::clamp(need, 0, total + 1);
  while (need > 0 && static_cast<double>(need - 1) / denom >= delta) --need;
  while (need <= total && static_cast<double>(need) / denom < delta) ++need;
  return need;
}

double distance_to_sensor(const Box3D& b) { return b.center.norm(); }

// Patch points inside the box, in patch order, with ground points excluded.
std::vector<Vec3> contained_points(const Box3D& box, const Rect2D& rect, const XYZMap& map,
                                   int h) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * h);
  count_inside(box, rect, map, h, 0, mask.data());
  std::vector<Vec3> out;
  for (int i = 0; i < h; ++i) {
    const int row = sample_pixel(rect.v_min, rect.v_max, i, h, map.height);
    for (int j = 0; j < h; ++j) {
      if (!mask[i * h + j]) continue;
      const int col = sample_pixel(rect.u_min, rect.u_max, j, h, map.width);
      out.push_back(map.xyz[map.index(row, col)]);
    }
  }
  return out;
}

ImageSize map_size(const XYZMap& map) { return {map.width, map.height}; }

}  // namespace

std::optional<DensityResult> npcd(const Box3D& anchor, const XYZMap& map,
                                  const Calibration& calib, int patch_size) {
  if (patch_size < 2) throw InputError("patch size must be at least 2");
  const auto rect = project_box_to_image(anchor, calib, map_size(map));
  if (!rect) return std::nullopt;
  DensityResult r;
  r.inside.resize(static_cast<std::size_t>(patch_size) * patch_size);
  r.n_in = count_inside(anchor, *rect, map, patch_size, 0, r.inside.data());
  r.density = static_cast<double>(r.n_in) / static_cast<double>(patch_size * patch_size);
  return r;
}

std::vector<Proposal> filter_by_density(std::span<const Proposal> scored, double delta) {
  std::vector<Proposal> out;
  for (const Proposal& p : scored)
    if (p.density >= delta) out.push_back(p);
  return out;
}

std::vector<Proposal> select(std::span<const Anchor> anchors, const XYZMap& map,
                             int patch_size, double delta, unsigned workers) {
  if (patch_size < 2) throw InputError("patch size must be at least 2");
  const int need = std::max(1, min_count_for(delta, patch_size));
  const double denom = static_cast<double>(patch_size * patch_size);
  std::vector<int> counts(anchors.size(), -1);
  parallel_for(anchors.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      counts[i] = count_inside(anchors[i].box, anchors[i].rect, map, patch_size, need, nullptr);
  });
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (counts[i] < 0) continue;
    Proposal p;
    p.box = anchors[i].box;
    p.n_in = counts[i];
    p.density = static_cast<double>(counts[i]) / denom;
    p.anchor_index = anchors[i].index;
    p.template_id = anchors[i].template_id;
    if (p.density >= delta) out.push_back(p);
  }
  return out;
}

EnlargementCheck check_enlargement(const Proposal& proposal, const XYZMap& map,
                                   const Calibration& calib, int patch_size, double eps,
                                   int slack) {
  Box3D big = proposal.box;
  big.half_extents *= (1.0 + eps);
  const auto rect = project_box_to_image(big, calib, map_size(map));
  if (!rect) return {false, 0};
  const std::size_t n = static_cast<std::size_t>(patch_size) * patch_size;
  std::vector<std::uint8_t> in_big(n), in_orig(n);
  count_inside(big, *rect, map, patch_size, 0, in_big.data());
  count_inside(proposal.box, *rect, map, patch_size, 0, in_orig.data());
  int extra = 0;
  for (std::size_t k = 0; k < n; ++k) extra += (in_big[k] && !in_orig[k]) ? 1 : 0;
  return {extra <= slack, extra};
}

bool enlargement_filter(const Proposal& proposal, const XYZMap& map,
                        const Calibration& calib, int patch_size, double eps, int slack) {
  return check_enlargement(proposal, map, calib, patch_size, eps, slack).keep;
}

AlignTrace align_traced(const Proposal& proposal, const XYZMap& map,
                        const Calibration& calib, int patch_size) {
  AlignTrace trace;
  trace.result = proposal;
  const auto rect = project_box_to_image(proposal.box, calib, map_size(map));
  if (!rect) return trace;
  const std::vector<Vec3> pts = contained_points(proposal.box, *rect, map, patch_size);
  if (pts.empty()) return trace;

  const Box3D& box = proposal.box;
  const std::array<Vec3, 3> axes{box.axis_x(), box.axis_y(), box.axis_z()};
  Vec3 center = box.center;
  for (int a = 0; a < 3; ++a) {
    double best = -1.0;
    double m = 0.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double q = (pts[i] - box.center).dot(axes[a]);
      if (std::abs(q) > best) {
        best = std::abs(q);
        m = q;
        arg = i;
      }
    }
    const double half = box.half_extents[a];
    const double shift = m - (m < 0.0 ? -half : half);
    trace.extreme_points[a] = pts[arg];
    trace.shifts[a] = shift;
    center += shift * axes[a];
  }
  trace.result.box.center = center;
  trace.result.aligned = true;
  return trace;
}

Proposal align(const Proposal& proposal, const XYZMap& map, const Calibration& calib,
               int patch_size) {
  return align_traced(proposal, map, calib, patch_size).result;
}

std::vector<Proposal> rank_and_budget(std::vector<Proposal> proposals, std::size_t k,
                                      std::optional<double> nms_iou) {
  if (k == 0) throw InputError("proposal budget must be at least 1");
  std::sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    if (a.density != b.density) return a.density > b.density;
    const double da = distance_to_sensor(a.box), db = distance_to_sensor(b.box);
    if (da != db) return da < db;
    return a.anchor_index < b.anchor_index;
  });
  if (!nms_iou) {
    if (proposals.size() > k) proposals.resize(k);
    return proposals;
  }
  std::vector<Proposal> kept;
  for (const Proposal& p : proposals) {
    if (kept.size() >= k) break;
    bool suppressed = false;
    for (const Proposal& q : kept) {
      if (iou_bev(p.box, q.box) > *nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

int baseline_pcd(const Box3D& anchor, const PointCloud& cloud) {
  int n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (i < cloud.ground_mask.size() && cloud.ground_mask[i]) continue;
    if (contains(cloud.points[i], anchor)) ++n;
  }
  return n;
}

namespace {

// Non-ground points bucketed on a BEV grid (compressed rows).
class BevIndex {
 public:
  BevIndex(const PointCloud& cloud, double x0, double x1, double z0, double z1, double cell)
      : x0_(x0), z0_(z0), cell_(cell) {
    nx_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((x1 - x0) / cell)));
    nz_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((z1 - z0) / cell)));
    std::vector<std::size_t> cell_of;
    std::vector<std::size_t> members;
    offsets_.assign(nx_ * nz_ + 1, 0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (i < cloud.ground_mask.size() && cloud.ground_mask[i]) continue;
      const Vec3& p = cloud.points[i];
      if (p.x() < x0 || p.x() >= x1 || p.z() < z0 || p.z() >= z1) continue;
      const std::size_t c = cell_index(p.x(), p.z());
      cell_of.push_back(c);
      members.push_back(i);
      ++offsets_[c + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    points_.resize(members.size());
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t m = 0; m < members.size(); ++m)
      points_[fill[cell_of[m]]++] = cloud.points[members[m]];
  }

  int count_inside(const Box3D& box) const {
    double xlo = 1e300, xhi = -1e300, zlo = 1e300, zhi = -1e300;
    for (const Vec2& c : bev_footprint(box)) {
      xlo = std::min(xlo, c.x());
      xhi = std::max(xhi, c.x());
      zlo = std::min(zlo, c.y());
      zhi = std::max(zhi, c.y());
    }
    const auto clamp_ix = [&](double x) {
      return static_cast<std::size_t>(
          std::clamp<double>(std::floor((x - x0_) / cell_), 0.0, double(nx_ - 1)));
    };
    const auto clamp_iz = [&](double z) {
      return static_cast<std::size_t>(
          std::clamp<double>(std::floor((z - z0_) / cell_), 0.0, double(nz_ - 1)));
    };
    int n = 0;
    for (std::size_t iz = clamp_iz(zlo); iz <= clamp_iz(zhi); ++iz)
      for (std::size_t ix = clamp_ix(xlo); ix <= clamp_ix(xhi); ++ix) {
        const std::size_t c = iz * nx_ + ix;
        for (std::size_t k = offsets_[c]; k < offsets_[c + 1]; ++k)
          if (contains(points_[k], box)) ++n;
      }
    return n;
  }

 private:
  std::size_t cell_index(double x, double z) const {
    const auto ix = std::min(nx_ - 1, static_cast<std::size_t>((x - x0_) / cell_));
    const auto iz = std::min(nz_ - 1, static_cast<std::size_t>((z - z0_) / cell_));
    return iz * nx_ + ix;
  }

  double x0_, z0_, cell_;
  std::size_t nx_ = 1, nz_ = 1;
  std::vector<std::size_t> offsets_;
  std::vector<Vec3> points_;
};

void sort_ranked(std::vector<RankedBox>& boxes) {
  std::sort(boxes.begin(), boxes.end(), [](const RankedBox& a, const RankedBox& b) {
    if (a.score != b.score) return a.score > b.score;
    const double da = distance_to_sensor(a.box), db = distance_to_sensor(b.box);
    if (da != db) return da < db;
    return a.anchor_index < b.anchor_index;
  });
}

}  // namespace

std::vector<RankedBox> rank_pcd(std::span<const Anchor> anchors, const PointCloud& cloud,
                                unsigned workers) {
  std::vector<RankedBox> out(anchors.size());
  if (anchors.empty()) return out;
  double xlo = 1e300, xhi = -1e300, zlo = 1e300, zhi = -1e300;
  for (const Anchor& a : anchors)
    for (const Vec2& c : bev_footprint(a.box)) {
      xlo = std::min(xlo, c.x());
      xhi = std::max(xhi, c.x());
      zlo = std::min(zlo, c.y());
      zhi = std::max(zhi, c.y());
    }
  // Points outside the anchors' joint footprint can never be counted.
  const BevIndex index(cloud, xlo - 1.0, xhi + 1.0, zlo - 1.0, zhi + 1.0, 0.5);
  parallel_for(anchors.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      out[i] = {anchors[i].box, static_cast<double>(index.count_inside(anchors[i].box)),
                anchors[i].index, anchors[i].template_id};
  });
  sort_ranked(out);
  return out;
}

std::vector<RankedBox> baseline_inc(std::span<const Anchor> anchors) {
  std::vector<RankedBox> out;
  out.reserve(anchors.size());
  for (const Anchor& a : anchors) out.push_back({a.box, 0.0, a.index, a.template_id});
  sort_ranked(out);
  return out;
}

XYZMap prepare_map(const PointCloud& masked_cloud, const Calibration& calib, ImageSize image) {
  XYZMap map = build_xyz_map(masked_cloud, calib, image);
  if (map.valid_count() == 0) return XYZMap{};
  return inpaint(map);
}

UpmResult run_upm(const AnchorSet& anchors, const XYZMap& map, const Calibration& calib,
                  const UpmParams& params) {
  UpmResult result;
  result.stats.anchors_total = anchors.total_before_culling;
  result.stats.anchors_in_frustum = anchors.anchors.size();
  if (map.width == 0 || map.height == 0) return result;

  const int h = params.patch_size;
  std::vector<Proposal> selected =
      select(anchors.anchors, map, h, params.density_threshold, params.workers);
  result.stats.after_selection = selected.size();

  std::vector<std::uint8_t> keep(selected.size(), 0);
  std::vector<Proposal> aligned(selected.size());
  parallel_for(selected.size(), params.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (!enlargement_filter(selected[i], map, calib, h, params.enlarge_ratio,
                              params.enlarge_slack))
        continue;
      keep[i] = 1;
      aligned[i] = align(selected[i], map, calib, h);
    }
  });
  std::vector<Proposal> survivors;
  for (std::size_t i = 0; i < selected.size(); ++i)
    if (keep[i]) survivors.push_back(aligned[i]);
  result.stats.after_enlargement = survivors.size();

  result.proposals = rank_and_budget(std::move(survivors), std::max<std::size_t>(1, params.top_k),
                                     params.nms_iou);
  result.stats.proposals = result.proposals.size();
  return result;
}

UpmResult propose(const PointCloud& masked_cloud, const GroundPlane& plane,
                  const Calibration& calib, ImageSize image, const UpmParams& params) {
  const AnchorSet anchors = generate_anchors(plane, params.grid, calib, image);
  const XYZMap map = prepare_map(masked_cloud, calib, image);
  return run_upm(anchors, map, calib, params);
}

}  // namespace upm
