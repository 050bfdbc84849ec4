#pragma once

#include "dgecn/geometry.hpp"
#include "dgecn/synth.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dgecn {

// Closed-form EPnP. Control points are the centroid plus the principal axes
// (three control points when the cloud is planar). The null space of the
// 2n x 3c projection system is combined with N = 1, 2, 3 basis vectors; each
// case is refined by Gauss-Newton on the control-point distances and turned
// into a pose by Procrustes alignment. The case with the lowest mean
// reprojection error wins.
//
// Throws TooFewPoints below four correspondences or on a size mismatch, and
// DegenerateConfiguration for collinear clouds or when no case yields a pose.
Pose epnp_solve(std::span<const Point3> points3d, std::span<const Point2> points2d, const CameraIntrinsics& intr);

// Mean pixel distance; points behind the camera count as kBehindCameraPenalty.
double mean_reprojection_error(const Pose& pose, std::span<const Point3> points3d, std::span<const Point2> points2d,
                               const CameraIntrinsics& intr);
double reprojection_error(const Pose& pose, const Point3& p, const Point2& px, const CameraIntrinsics& intr);

inline constexpr double kBehindCameraPenalty = 1e6;

struct RansacConfig {
  std::size_t max_iterations = 200;
  double inlier_threshold = 3.0;  // pixels
  std::size_t min_sample = 4;
  double confidence = 0.999;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct RansacResult {
  Pose pose;
  std::vector<bool> inlier_mask;
  std::size_t iterations_used = 0;

  std::size_t inlier_count() const;
};

// Hypothesize-and-verify around epnp_solve with the adaptive iteration bound
// log(1 - confidence) / log(1 - w^4). The best hypothesis is refit on all of
// its inliers. Throws NoConsensus when no hypothesis gathers min_sample inliers.
RansacResult ransac_pnp(std::span<const Point3> points3d, std::span<const Point2> points2d, const CameraIntrinsics& intr,
                        const RansacConfig& config);
RansacResult ransac_pnp(const CorrespondenceSet& corrs, const RansacConfig& config);

// Flattened (3D keypoint, pixel) pairs of every hypothesis.
void flatten_correspondences(const CorrespondenceSet& corrs, std::vector<Point3>& points3d, std::vector<Point2>& points2d);

}  // namespace dgecn
