#pragma once

#include "dgecn/metrics.hpp"

#include <cstddef>
#include <vector>

namespace dgecn {

struct KeypointSet {
  std::vector<std::size_t> indices;  // into the source mesh
  std::vector<Point3> points;        // points[i] == mesh[indices[i]]

  std::size_t size() const noexcept { return points.size(); }
};

inline constexpr std::size_t kDefaultKeypointCount = 8;

// Vertex closest to the centroid (lowest index on ties); the default FPS seed.
std::size_t centroid_seed(const MeshModel& mesh);

// Greedy farthest point sampling. The first pick is `seed_index`; every later
// pick maximizes its distance to the already selected set, ties going to the
// lowest vertex index. Throws InvalidCount unless 1 <= n <= mesh size and
// InvalidSeed for an out-of-range seed.
KeypointSet fps_select(const MeshModel& mesh, std::size_t n, std::size_t seed_index);

}  // namespace dgecn
