#include "dgecn/keypoints.hpp"

#include "dgecn/error.hpp"

#include <limits>

namespace dgecn {

std::size_t centroid_seed(const MeshModel& mesh) {
  Point3 c = Point3::Zero();
  for (const auto& v : mesh.vertices()) c += v;
  c /= static_cast<double>(mesh.size());
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const double d = (mesh[i] - c).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

KeypointSet fps_select(const MeshModel& mesh, std::size_t n, std::size_t seed_index) {
  if (n < 1 || n > mesh.size()) fail(ErrorKind::InvalidCount, "keypoint count must be in [1, vertex count]");
  if (seed_index >= mesh.size()) fail(ErrorKind::InvalidSeed, "seed index out of range");

  KeypointSet out;
  out.indices.reserve(n);
  out.points.reserve(n);
  std::vector<double> min_d2(mesh.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> taken(mesh.size(), false);

  std::size_t next = seed_index;
  for (std::size_t step = 0; step < n; ++step) {
    out.indices.push_back(next);
    out.points.push_back(mesh[next]);
    taken[next] = true;
    const Point3& p = mesh[next];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      if (taken[i]) continue;
      min_d2[i] = std::min(min_d2[i], (mesh[i] - p).squaredNorm());
      // strict > keeps the lowest index on ties
      if (min_d2[i] > best_d) {
        best_d = min_d2[i];
        best = i;
      }
    }
    next = best;
  }
  return out;
}

}  // namespace dgecn
