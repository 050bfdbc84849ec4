#include "dgecn/metrics.hpp"

#include "dgecn/error.hpp"
#include "dgecn/simd/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace dgecn {

MeshModel::MeshModel(std::vector<Point3> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.empty()) fail(ErrorKind::TooFewVertices, "mesh needs at least one vertex");
  for (const auto& v : vertices_)
    if (!v.allFinite()) fail(ErrorKind::DegenerateInput, "mesh vertex is not finite");
}

namespace {

struct SoaCloud {
  std::vector<double> x, y, z;
};

SoaCloud transformed_soa(const Pose& pose, const MeshModel& mesh) {
  SoaCloud c;
  c.x.resize(mesh.size());
  c.y.resize(mesh.size());
  c.z.resize(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const Point3 p = transform_point(pose, mesh[i]);
    c.x[i] = p.x();
    c.y[i] = p.y();
    c.z[i] = p.z();
  }
  return c;
}

}  // namespace

double model_diameter(const MeshModel& mesh) {
  if (mesh.size() < 2) fail(ErrorKind::TooFewVertices, "diameter needs at least two vertices");
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < mesh.size(); ++i)
    for (std::size_t j = i + 1; j < mesh.size(); ++j) best = std::max(best, (mesh[i] - mesh[j]).squaredNorm());
  return std::sqrt(best);
}

double add(const Pose& est, const Pose& gt, const MeshModel& mesh) {
  double sum = 0.0;
  for (const auto& x : mesh.vertices()) sum += (transform_point(gt, x) - transform_point(est, x)).norm();
  return sum / static_cast<double>(mesh.size());
}

double add_s(const Pose& est, const Pose& gt, const MeshModel& mesh) {
  const SoaCloud e = transformed_soa(est, mesh);
  const auto& k = simd::kernels();
  double sum = 0.0;
  for (const auto& x1 : mesh.vertices()) {
    const Point3 g = transform_point(gt, x1);
    sum += std::sqrt(k.min_squared_distance_soa(g.x(), g.y(), g.z(), e.x.data(), e.y.data(), e.z.data(), mesh.size()));
  }
  return sum / static_cast<double>(mesh.size());
}

double rep(const Pose& est, const Pose& gt, const MeshModel& mesh, const CameraIntrinsics& intr) {
  double sum = 0.0;
  for (const auto& x : mesh.vertices())
    sum += (project(intr, transform_point(gt, x)) - project(intr, transform_point(est, x))).norm();
  return sum / static_cast<double>(mesh.size());
}

bool is_add_correct(double distance, double diameter) { return distance < 0.1 * diameter; }

bool is_rep_correct(double rep_px) { return rep_px < 5.0; }

double auc_add_s(std::span<const double> distances, double max_threshold) {
  if (distances.empty()) fail(ErrorKind::EmptyInput, "AUC needs at least one distance");
  if (!(max_threshold > 0.0)) fail(ErrorKind::InvalidConfig, "AUC threshold must be positive");
  double sum = 0.0;
  for (double d : distances) {
    if (!(d >= 0.0)) fail(ErrorKind::InvalidConfig, "AUC distances must be non-negative");
    sum += std::max(0.0, 1.0 - d / max_threshold);
  }
  return sum / static_cast<double>(distances.size());
}

MetricReport evaluate_pose(const Pose& est, const Pose& gt, const MeshModel& mesh, const CameraIntrinsics& intr,
                           double diameter, bool symmetric) {
  MetricReport r;
  r.add = add(est, gt, mesh);
  r.add_s = add_s(est, gt, mesh);
  r.rep = rep(est, gt, mesh, intr);
  r.add_correct = is_add_correct(symmetric ? r.add_s : r.add, diameter);
  r.rep_correct = is_rep_correct(r.rep);
  return r;
}

}  // namespace dgecn
