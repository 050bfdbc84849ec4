#pragma once

#include "dgecn/geometry.hpp"

#include <span>
#include <vector>

namespace dgecn {

// Object-frame vertex cloud. Vertices are kept in structure-of-arrays form
// as well, which is what the nearest-vertex search streams over.
class MeshModel {
 public:
  // Throws TooFewVertices for an empty list, DegenerateInput for non-finite vertices.
  explicit MeshModel(std::vector<Point3> vertices);

  std::span<const Point3> vertices() const noexcept { return vertices_; }
  std::size_t size() const noexcept { return vertices_.size(); }
  const Point3& operator[](std::size_t i) const { return vertices_[i]; }

 private:
  std::vector<Point3> vertices_;
};

struct MetricReport {
  double add = 0.0;    // meters
  double add_s = 0.0;  // meters
  double rep = 0.0;    // pixels
  bool add_correct = false;
  bool rep_correct = false;
};

// Max pairwise vertex distance. Throws TooFewVertices below two vertices.
double model_diameter(const MeshModel& mesh);

// Mean distance between corresponding transformed vertices.
double add(const Pose& est, const Pose& gt, const MeshModel& mesh);

// Mean over gt-transformed vertices of the distance to the closest
// est-transformed vertex. O(m^2), vectorized inner loop.
double add_s(const Pose& est, const Pose& gt, const MeshModel& mesh);

// Mean pixel distance between projections under both poses. Propagates PointBehindCamera.
double rep(const Pose& est, const Pose& gt, const MeshModel& mesh, const CameraIntrinsics& intr);

// Strict: distance < 0.1 * diameter.
bool is_add_correct(double distance, double diameter);
// Strict: rep < 5 px.
bool is_rep_correct(double rep_px);

// Normalized area under accuracy(tau) = |{d < tau}| / N for tau in [0, max].
// Computed exactly from the step function: mean of max(0, 1 - d / max).
// Throws EmptyInput for an empty list, InvalidConfig for negative distances or max <= 0.
double auc_add_s(std::span<const double> distances, double max_threshold = 0.10);

// Full report; `symmetric` selects ADD-S for the correctness decision.
MetricReport evaluate_pose(const Pose& est, const Pose& gt, const MeshModel& mesh, const CameraIntrinsics& intr,
                           double diameter, bool symmetric = false);

}  // namespace dgecn
