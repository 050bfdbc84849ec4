#pragma once

// Small models and samples shared by the unit tests and the acceptance run.

#include "dgecn/dgpnp.hpp"
#include "dgecn/synth.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <vector>

namespace fixture {

using namespace dgecn;

inline DatasetConfig small_dataset(std::size_t keypoints = 2, std::size_t m = 6) {
  DatasetConfig d;
  d.keypoints = keypoints;
  d.hypotheses_per_keypoint = m;
  d.sphere_points = 200;
  d.train = {16, 0.0, 4.0, 0.0, 0.2};
  d.test = {8, 0.0, 4.0, 0.0, 0.2};
  return d;
}

inline DgPnpConfig small_model(std::size_t keypoints = 2, std::size_t k = 3, bool dynamic = true) {
  DgPnpConfig c;
  c.keypoints = keypoints;
  c.layer_dims = {6, 8, 8};
  c.head_hidden = {16};
  c.k = k;
  c.dynamic = dynamic;
  return c;
}

inline SyntheticSample sample(const DatasetConfig& d, std::uint64_t seed, double sigma = 2.0, double rate = 0.0) {
  const SceneModel scene = make_scene_model(d);
  return generate_sample(d, scene, SplitConfig{1, sigma, sigma, rate, rate}, seed);
}

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;
  double worst_abs = 0.0;
};

// Central differences on every parameter entry against backward().
inline GradCheck gradient_check(DgPnpModel model, const SyntheticSample& s, double eps, double tol,
                                const LossWeights& w = {}) {
  LossTape tape = record_loss(model, s.correspondences, s.gt_pose, w);
  const std::vector<Tensor> analytic = backward(model, s.correspondences, tape);
  GradCheck out;
  auto params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p]->size(); ++i) {
      double& x = params[p]->data()[i];
      const double keep = x;
      x = keep + eps;
      const double up = record_loss(model, s.correspondences, s.gt_pose, w).total;
      x = keep - eps;
      const double down = record_loss(model, s.correspondences, s.gt_pose, w).total;
      x = keep;
      const double numeric = (up - down) / (2 * eps);
      const double e = oracle::grad_rel_err(analytic[p].data()[i], numeric);
      ++out.checked;
      out.worst_abs = std::max(out.worst_abs, std::abs(analytic[p].data()[i] - numeric));
      out.failed += !(e < tol);
      out.worst = std::max(out.worst, e);
    }
  }
  return out;
}

}  // namespace fixture
