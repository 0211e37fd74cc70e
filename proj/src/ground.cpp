// SPDX-License-Identifier: Apache-2.0
#include "upm/ground.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <random>

namespace upm {

namespace {

Vec3 up() { return {0.0, -1.0, 0.0}; }

GroundPlane oriented(Vec3 normal, const Vec3& on_plane, double threshold) {
  normal.normalize();
  if (normal.dot(up()) < 0.0) normal = -normal;
  return {normal, -normal.dot(on_plane), threshold};
}

// Total least squares: the normal is the eigenvector of the smallest
// eigenvalue of the scatter matrix.
GroundPlane refit(const std::vector<Vec3>& pts, double threshold) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 scatter = Mat3::Zero();
  for (const Vec3& p : pts) {
    const Vec3 d = p - mean;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  return oriented(eig.eigenvectors().col(0), mean, threshold);
}

}  // namespace

double GroundPlane::y_at(double x, double z) const {
  return -(offset + normal.x() * x + normal.z() * z) / normal.y();
}

GroundPlane prior_plane(double height, double threshold) {
  return {up(), height, threshold};
}

GroundPlane fit_ground(const PointCloud& cloud, const RansacParams& params) {
  std::vector<Vec3> candidates;
  for (const Vec3& p : cloud.points)
    if (std::abs(p.y() - params.height_prior) <= params.prior_band) candidates.push_back(p);
  if (candidates.size() < 3)
    throw InputError(fmt::format("ground fit needs 3 candidate points, found {}",
                                 candidates.size()));

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  std::size_t best_count = 0;
  GroundPlane best;
  bool found = false;
  const int attempts = std::max(1, params.iterations);
  for (int it = 0; it < attempts; ++it) {
    const std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    const Vec3 n = (candidates[j] - candidates[i]).cross(candidates[k] - candidates[i]);
    if (n.norm() < 1e-9) continue;
    const GroundPlane h = oriented(n, candidates[i], params.threshold);
    std::size_t count = 0;
    for (const Vec3& p : candidates)
      if (std::abs(h.signed_distance(p)) <= params.threshold) ++count;
    if (!found || count > best_count) {
      best = h;
      best_count = count;
      found = true;
    }
  }
  if (!found) {
    // All random triples were degenerate; scan for any non-collinear triple.
    const Vec3& a = candidates[0];
    for (std::size_t j = 1; j < candidates.size() && !found; ++j)
      for (std::size_t k = j + 1; k < candidates.size() && !found; ++k) {
        const Vec3 n = (candidates[j] - a).cross(candidates[k] - a);
        if (n.norm() >= 1e-9) {
          best = oriented(n, a, params.threshold);
          found = true;
        }
      }
    if (!found) throw InputError("ground candidates are collinear");
  }

  std::vector<Vec3> inliers;
  for (const Vec3& p : candidates)
    if (std::abs(best.signed_distance(p)) <= params.threshold) inliers.push_back(p);
  if (inliers.size() >= 3) {
    const GroundPlane lsq = refit(inliers, params.threshold);
    if (lsq.normal.allFinite()) return lsq;
  }
  return best;
}

PointCloud mask_ground(PointCloud cloud, const GroundPlane& plane) {
  cloud.ground_mask.resize(cloud.points.size(), 0);
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    if (std::abs(plane.signed_distance(cloud.points[i])) <= plane.inlier_threshold)
      cloud.ground_mask[i] = 1;
  return cloud;
}

}  // namespace upm
