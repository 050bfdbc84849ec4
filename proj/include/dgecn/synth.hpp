#pragma once

#include "dgecn/depth.hpp"
#include "dgecn/geometry.hpp"
#include "dgecn/keypoints.hpp"
#include "dgecn/metrics.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace dgecn {

struct Correspondence {
  std::size_t keypoint_index = 0;
  Point2 pixel = Point2::Zero();
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  double depth = 0.0;  // NaN where the pixel ray misses the object
  bool is_outlier_gt = false;
  std::vector<double> kfa_input;  // sorted depth differences; empty when KFA is off

  bool has_depth() const;
};

// n keypoints, each with exactly m image hypotheses, stored keypoint-major:
// hypothesis j of keypoint i sits at i * m + j.
struct CorrespondenceSet {
  KeypointSet keypoints;
  std::size_t hypotheses_per_keypoint = 0;
  std::vector<Correspondence> hypotheses;
  CameraIntrinsics intrinsics;

  std::size_t keypoint_count() const noexcept { return keypoints.size(); }
  std::size_t total() const noexcept { return hypotheses.size(); }
  const Correspondence& at(std::size_t keypoint, std::size_t j) const {
    return hypotheses[keypoint * hypotheses_per_keypoint + j];
  }
  Correspondence& at(std::size_t keypoint, std::size_t j) { return hypotheses[keypoint * hypotheses_per_keypoint + j]; }
  // Throws DimensionMismatch when the layout invariant n * m == total is broken.
  void validate() const;
};

struct SyntheticSample {
  CorrespondenceSet correspondences;
  Pose gt_pose;
  std::shared_ptr<const MeshModel> model;
  std::optional<DepthMap> depth_map;  // rendered only on request; 640x480 doubles per sample add up
  double sigma = 0.0;
  double outlier_rate = 0.0;
  std::uint64_t seed = 0;
};

CameraIntrinsics default_camera();

// Fibonacci lattice on a sphere centered at the object origin, rotated by a
// seeded uniform random rotation. Throws InvalidRadius, TooFewVertices (< 4).
MeshModel make_sphere_model(double radius, std::size_t count, std::uint64_t rng_seed);

// Uniform rotation (quaternion construction); z uniform in [z_min, z_max];
// x, y put the object origin inside the central 80% of the image. With a
// positive `object_radius` draws are rejected until a sphere of that radius
// projects entirely inside the image.
Pose sample_pose(std::mt19937_64& rng, double z_min, double z_max, const CameraIntrinsics& intr = default_camera(),
                 double object_radius = 0.0);

// r = u / width, g = v / height, b = 0.5
Eigen::Vector3d gradient_background_rgb(const Point2& pixel, const CameraIntrinsics& intr);

// Front ray-sphere intersection depth along the pixel ray; NaN on a miss.
double sphere_depth_at(const Point2& pixel, const Eigen::Vector3d& center, double radius, const CameraIntrinsics& intr);

// Analytic depth of a sphere at every integer pixel; misses stay invalid.
// Throws SphereBehindCamera unless center z > radius.
DepthMap render_sphere_depth(const Eigen::Vector3d& center, double radius, const CameraIntrinsics& intr);

// Analytic depth for every integer pixel. The sphere is centered at the pose
// translation (the model is expected to be the sphere `sphere_radius`
// describes). Throws SphereBehindCamera unless translation z > radius.
DepthMap render_depth(const MeshModel& model, const Pose& pose, const CameraIntrinsics& intr, double sphere_radius);

struct CorrespondenceOptions {
  std::size_t hypotheses_per_keypoint = 10;
  double sigma = 0.0;         // noise variance in px^2; std = sqrt(sigma)
  double outlier_rate = 0.0;  // fraction of all n * m hypotheses
  double sphere_radius = 0.1;
  std::size_t kfa_k = 0;      // 0 disables the KFA difference vectors
  int kfa_window_radius = 3;
};

// Exact projections plus isotropic Gaussian noise; round(rate * M) hypotheses
// chosen without replacement are replaced by uniform in-image pixels and
// flagged. Throws InvalidSigma, InvalidRate, InvalidCount.
CorrespondenceSet generate_correspondences(const KeypointSet& keypoints, const Pose& pose, const CameraIntrinsics& intr,
                                           const CorrespondenceOptions& options, std::mt19937_64& rng);

struct SplitConfig {
  std::size_t size = 0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double rate_min = 0.0;
  double rate_max = 0.0;
};

struct DatasetConfig {
  SplitConfig train{20000, 0.0, 15.0, 0.10, 0.30};
  SplitConfig test{2000, 0.0, 15.0, 0.10, 0.30};
  double sphere_radius = 0.1;
  std::size_t sphere_points = 1000;
  std::uint64_t mesh_seed = 7;
  std::size_t keypoints = kDefaultKeypointCount;
  std::size_t hypotheses_per_keypoint = 10;
  double z_min = 0.6;
  double z_max = 1.2;
  CameraIntrinsics camera = default_camera();
  std::size_t kfa_k = 0;
  int kfa_window_radius = 3;
  bool keep_depth_maps = false;

  // Throws InvalidConfig / InvalidSigma / InvalidRate with the offending bound.
  void validate() const;
};

enum class Split : std::uint64_t { Train = 0x7472'6169'6e00'0000ULL, Test = 0x7465'7374'0000'0000ULL };

// Seed of sample `index` in `split`: a splitmix64 hash of (seed, split, index).
std::uint64_t sample_seed(std::uint64_t seed, Split split, std::size_t index);

struct SceneModel {
  std::shared_ptr<const MeshModel> mesh;
  KeypointSet keypoints;
};

// Sphere mesh and its FPS keypoints (centroid seed), shared by every sample.
SceneModel make_scene_model(const DatasetConfig& config);

SyntheticSample generate_sample(const DatasetConfig& config, const SceneModel& scene, const SplitConfig& split,
                                std::uint64_t sub_seed);

// One split; samples are generated in parallel, each from its own sub-seed,
// so the output equals sequential generation.
std::vector<SyntheticSample> generate_split(const DatasetConfig& config, const SceneModel& scene, Split split,
                                            const SplitConfig& split_config, std::uint64_t rng_seed);

struct Dataset {
  SceneModel scene;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
};

Dataset generate_dataset(const DatasetConfig& config, std::uint64_t rng_seed);

}  // namespace dgecn
