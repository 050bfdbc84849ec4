#include "dgecn/dgpnp.hpp"
#include "dgecn/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace dgecn;

namespace {

Tensor random_tensor(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> n(0, s);
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no exception";
  return ErrorKind::IoError;
}

std::vector<std::vector<double>> lambdas(const LocalGraph& g) {
  std::vector<std::vector<double>> out(g.vertex_count);
  for (std::size_t i = 0; i < g.vertex_count; ++i)
    for (std::size_t s = 0; s < g.k; ++s) out[i].push_back(g.weight(i, s));
  return out;
}

std::vector<std::vector<std::size_t>> neighbor_lists(const LocalGraph& g) {
  std::vector<std::vector<std::size_t>> out(g.vertex_count);
  for (std::size_t i = 0; i < g.vertex_count; ++i)
    for (std::size_t s = 0; s < g.k; ++s) out[i].push_back(g.neighbor(i, s));
  return out;
}

// Head whose last layer ignores its input and emits `bias`.
DgPnpModel constant_head(DgPnpModel m, const Tensor& bias) {
  m.head.back().weight.setZero();
  m.head.back().bias = bias;
  return m;
}

Tensor pose_bias(const Pose& p) {
  Tensor b(1, 9);
  const auto& r = p.rotation.matrix();
  b << r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1), p.translation.x(), p.translation.y(), p.translation.z();
  return b;
}

}  // namespace

TEST(BuildGraph, SingleNeighborHasUnitWeight) {
  Tensor f = Tensor::Zero(3, 6);
  f(1, 0) = 1;
  f(2, 0) = -1;  // vertex 0 is equidistant from 1 and 2
  const LocalGraph g = build_graph(f, 1);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g.weight(i, 0), 1.0);
  EXPECT_EQ(g.neighbor(0, 0), 1u);  // tie goes to the lowest index
  EXPECT_EQ(g.neighbor(1, 0), 0u);
  EXPECT_EQ(g.neighbor(2, 0), 0u);
}

TEST(BuildGraph, IdenticalVerticesGiveUniformWeights) {
  const Tensor f = Tensor::Constant(7, 6, 0.3);
  const LocalGraph g = build_graph(f, 4);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t s = 0; s < 4; ++s) {
      EXPECT_DOUBLE_EQ(g.weight(i, s), 0.25);
      EXPECT_NE(g.neighbor(i, s), i);
    }
}

TEST(BuildGraph, MatchesSortOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Tensor f = random_tensor(30, 6, rng);
    const LocalGraph g = build_graph(f, 5);
    EXPECT_EQ(neighbor_lists(g), oracle::knn(f, 5));
  }
}

TEST(BuildGraph, WeightsNormalizedNoSelfLoops) {
  std::mt19937_64 rng(2);
  for (auto mode : {BandwidthMode::Adaptive, BandwidthMode::Uniform}) {
    for (int t = 0; t < 50; ++t) {
      const Tensor f = random_tensor(12, 6, rng, 0.1 + t);
      const LocalGraph g = build_graph(f, 4, mode);
      for (std::size_t i = 0; i < 12; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) {
          s += g.weight(i, j);
          EXPECT_GE(g.weight(i, j), 0.0);
          EXPECT_NE(g.neighbor(i, j), i);
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(BuildGraph, AdaptiveWeightsFollowGaussianKernel) {
  std::mt19937_64 rng(3);
  const Tensor f = random_tensor(10, 6, rng);
  const LocalGraph g = build_graph(f, 3);
  double h = 0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t s = 0; s < 3; ++s) h += (f.row(i) - f.row(g.neighbor(i, s))).norm();
  h /= 30;
  for (std::size_t i = 0; i < 10; ++i) {
    double z = 0;
    std::vector<double> w;
    for (std::size_t s = 0; s < 3; ++s) {
      const double d = (f.row(i) - f.row(g.neighbor(i, s))).norm();
      w.push_back(std::exp(-d * d / (2 * h * h)));
      z += w.back();
    }
    for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(g.weight(i, s), w[s] / z, 1e-12);
  }
}

TEST(BuildGraph, ClusterTooSmall) {
  EXPECT_EQ(kind_of([] { build_graph(Tensor::Zero(3, 6), 3); }), ErrorKind::ClusterTooSmall);
  EXPECT_EQ(kind_of([] { build_graph(Tensor::Zero(3, 6), 0); }), ErrorKind::ClusterTooSmall);
}

TEST(EdgeConv, ZeroWeightsGiveZero) {
  std::mt19937_64 rng(4);
  const Tensor f = random_tensor(8, 6, rng);
  const EdgeConvLayer layer{Tensor::Zero(5, 6), Tensor::Zero(5, 6)};
  EXPECT_EQ(edge_conv_forward(layer, f, build_graph(f, 3)), Tensor::Zero(8, 5));
}

TEST(EdgeConv, ConstantFieldReducesToReluBeta) {
  std::mt19937_64 rng(5);
  const Tensor row = random_tensor(1, 6, rng);
  const Tensor f = row.replicate(9, 1);
  const EdgeConvLayer layer{random_tensor(7, 6, rng), random_tensor(7, 6, rng)};
  const Tensor out = edge_conv_forward(layer, f, build_graph(f, 4));
  const Tensor expect = (row * layer.beta.transpose()).cwiseMax(0.0);
  for (Eigen::Index i = 0; i < 9; ++i) EXPECT_LT((out.row(i) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EdgeConv, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Tensor f = random_tensor(15, 6, rng);
    const EdgeConvLayer layer{random_tensor(11, 6, rng), random_tensor(11, 6, rng)};
    const LocalGraph g = build_graph(f, 5);
    const Tensor out = edge_conv_forward(layer, f, g);
    const Eigen::MatrixXd ref = oracle::edge_conv(layer.alpha, layer.beta, f, neighbor_lists(g), lambdas(g));
    EXPECT_LT((out - ref).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(EdgeConv, PermutationEquivariant) {
  std::mt19937_64 rng(7);
  const Tensor f = random_tensor(10, 6, rng);
  const EdgeConvLayer layer{random_tensor(4, 6, rng), random_tensor(4, 6, rng)};
  const Tensor out = edge_conv_forward(layer, f, build_graph(f, 3));
  std::vector<Eigen::Index> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor pf(10, 6);
  for (Eigen::Index i = 0; i < 10; ++i) pf.row(i) = f.row(perm[static_cast<std::size_t>(i)]);
  const Tensor pout = edge_conv_forward(layer, pf, build_graph(pf, 3));
  for (Eigen::Index i = 0; i < 10; ++i)
    EXPECT_LT((pout.row(i) - out.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EdgeConv, DimensionMismatch) {
  const EdgeConvLayer layer{Tensor::Zero(4, 5), Tensor::Zero(4, 5)};
  const Tensor f = Tensor::Zero(6, 6);
  EXPECT_EQ(kind_of([&] { edge_conv_forward(layer, f, build_graph(f, 2)); }), ErrorKind::DimensionMismatch);
}

TEST(Forward, ConstantHeadDecodesBias) {
  const auto d = fixture::small_dataset();
  const auto s = fixture::sample(d, 1);
  const Pose target(Rotation{}, {0.01, -0.02, 0.8});
  const DgPnpModel m = constant_head(DgPnpModel::init(fixture::small_model()), pose_bias(target));
  const Pose p = forward(m, s.correspondences);
  EXPECT_LT((p.rotation.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p.translation - target.translation).norm(), 1e-12);
  // a fresh model starts at identity rotation and the configured depth
  const Pose p0 = forward(DgPnpModel::init(fixture::small_model()), s.correspondences);
  EXPECT_LT(geodesic_angle(p0.rotation, Rotation{}), 0.5);
  EXPECT_TRUE(is_rotation(p0.rotation.matrix()));
}

TEST(Forward, InvariantToWithinClusterPermutation) {
  const auto d = fixture::small_dataset(3, 10);
  std::mt19937_64 rng(8);
  for (bool dynamic : {true, false}) {
    const DgPnpModel m = DgPnpModel::init(fixture::small_model(3, 4, dynamic));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = fixture::sample(d, seed, 4.0, 0.2);
      const Pose ref = forward(m, s.correspondences);
      for (int t = 0; t < 20; ++t) {
        CorrespondenceSet c = s.correspondences;
        for (std::size_t k = 0; k < c.keypoint_count(); ++k)
          std::shuffle(c.hypotheses.begin() + static_cast<std::ptrdiff_t>(k * 10),
                       c.hypotheses.begin() + static_cast<std::ptrdiff_t>((k + 1) * 10), rng);
        const Pose p = forward(m, c);
        EXPECT_LE((p.rotation.matrix() - ref.rotation.matrix()).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE((p.translation - ref.translation).cwiseAbs().maxCoeff(), 1e-9);
      }
    }
  }
}

TEST(Forward, ReorderingClustersChangesOutput) {
  // keypoint identity is positional: swapping whole clusters is not a symmetry
  const auto d = fixture::small_dataset(2, 6);
  const auto s = fixture::sample(d, 3);
  const DgPnpModel m = DgPnpModel::init(fixture::small_model());
  CorrespondenceSet c = s.correspondences;
  for (std::size_t j = 0; j < 6; ++j) {
    std::swap(c.hypotheses[j], c.hypotheses[j + 6]);
    std::swap(c.hypotheses[j].keypoint_index, c.hypotheses[j + 6].keypoint_index);
  }
  EXPECT_GT((forward(m, c).translation - forward(m, s.correspondences).translation).norm(), 1e-12);
}

TEST(Forward, PooledDescriptorShape) {
  const auto d = fixture::small_dataset(2, 6);
  const auto s = fixture::sample(d, 4);
  const DgPnpModel m = DgPnpModel::init(fixture::small_model());
  const Tensor pooled = pooled_descriptor(m, s.correspondences);
  EXPECT_EQ(pooled.rows(), 2);
  EXPECT_EQ(pooled.cols(), 8);
  EXPECT_GE(pooled.minCoeff(), 0.0);
}

TEST(Forward, ValidatesInputShape) {
  const auto d = fixture::small_dataset(3, 6);
  const auto s = fixture::sample(d, 5);
  const DgPnpModel m = DgPnpModel::init(fixture::small_model(2));
  EXPECT_THROW(forward(m, s.correspondences), Error);
}

TEST(VertexFeatures, BackprojectionAndFallback) {
  const auto d = fixture::small_dataset(2, 6);
  auto s = fixture::sample(d, 6, 0.0);
  CorrespondenceSet c = s.correspondences;
  const Tensor f = vertex_features(c, 0.9);
  ASSERT_EQ(f.rows(), 12);
  ASSERT_EQ(f.cols(), 6);
  for (Eigen::Index i = 0; i < 12; ++i) {
    const auto& h = c.hypotheses[static_cast<std::size_t>(i)];
    ASSERT_TRUE(h.has_depth());
    const Point3 p = backproject(c.intrinsics, h.pixel, h.depth);
    EXPECT_LT((f.row(i).head(3).transpose() - p).norm(), 1e-12);
    EXPECT_LT((f.row(i).tail(3).transpose() - h.rgb).norm(), 1e-15);
  }
  // cluster median for a single missing depth
  c.hypotheses[0].depth = NAN;
  std::vector<double> ds;
  for (std::size_t j = 1; j < 6; ++j) ds.push_back(c.hypotheses[j].depth);
  std::sort(ds.begin(), ds.end());
  EXPECT_NEAR(vertex_features(c, 0.9)(0, 2), ds[2], 1e-12);
  // nothing valid anywhere: the configured depth
  for (auto& h : c.hypotheses) h.depth = NAN;
  EXPECT_EQ(vertex_features(c, 0.7)(3, 2), 0.7);
}

TEST(LossPose, Examples) {
  std::mt19937_64 rng(9);
  const auto kps = fps_select(make_sphere_model(0.1, 200, 1), 8, 0);
  const Pose gt(Rotation::from_matrix(oracle::random_rotation(rng)), {0.1, 0, 1});
  EXPECT_EQ(loss_pose(gt, gt, kps), 0.0);
  const Pose off(gt.rotation, gt.translation + Eigen::Vector3d(0.03, 0, -0.04));
  EXPECT_NEAR(loss_pose(off, gt, kps), 0.05, 1e-15);
  for (int t = 0; t < 100; ++t) {
    const Pose a(Rotation::from_matrix(oracle::random_rotation(rng)), {0, 0.1, 1});
    double s = 0;
    for (const auto& p : kps.points) s += ((a.rotation * p + a.translation) - (gt.rotation * p + gt.translation)).norm();
    EXPECT_NEAR(loss_pose(a, gt, kps), s / 8, 1e-12);
    EXPECT_GT(loss_pose(a, gt, kps), 0.0);  // non-collinear keypoints: zero only at gt
  }
}

TEST(LossKeypoint, Examples) {
  const auto d = fixture::small_dataset(2, 6);
  const auto s = fixture::sample(d, 7, 3.0);
  std::vector<Point2> gt;
  for (const auto& p : s.correspondences.keypoints.points)
    gt.push_back(project(s.correspondences.intrinsics, transform_point(s.gt_pose, p)));
  double sum = 0;
  for (const auto& h : s.correspondences.hypotheses) sum += (h.pixel - gt[h.keypoint_index]).norm();
  EXPECT_NEAR(loss_keypoint(s.correspondences, gt), sum / 12, 1e-12);

  CorrespondenceSet c = s.correspondences;
  for (auto& h : c.hypotheses) h.pixel = gt[h.keypoint_index];
  EXPECT_EQ(loss_keypoint(c, gt), 0.0);
  for (auto& h : c.hypotheses) h.pixel += Point2(3, 4);
  EXPECT_NEAR(loss_keypoint(c, gt), 5.0, 1e-12);
}

TEST(LossFocal, Examples) {
  const std::vector<double> half(16, 0.5);
  std::vector<std::uint8_t> labels(16, 0);
  for (std::size_t i = 0; i < 16; i += 2) labels[i] = 1;
  EXPECT_NEAR(loss_focal(half, labels, 1.0, 0.0), std::log(2.0), 1e-15);
  const std::vector<double> sure{1.0 - 1e-9};
  const std::vector<std::uint8_t> yes{1};
  EXPECT_LT(loss_focal(sure, yes), 1e-6);

  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  std::vector<double> p(100);
  std::vector<std::uint8_t> y(100);
  double ref = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    p[i] = u(rng);
    y[i] = static_cast<std::uint8_t>(rng() & 1);
    const double pt = y[i] ? p[i] : 1 - p[i];
    ref += -0.25 * std::pow(1 - pt, 2.0) * std::log(pt);
  }
  EXPECT_NEAR(loss_focal(p, y), ref / 100, 1e-12);

  const std::vector<double> bad{1.0};
  EXPECT_EQ(kind_of([&] { loss_focal(bad, yes); }), ErrorKind::ProbabilityOutOfRange);
}

TEST(LossTotal, Examples) {
  EXPECT_EQ(loss_total({0, 0, 0, 2.5}, {0, 0, 0, 1}), 2.5);
  EXPECT_EQ(loss_total({1, 2, 3, 4}, {0, 0, 0, 0}), 0.0);
  EXPECT_EQ(loss_total({0, 0, 1, 2}, {0, 0, 1, 1}), 3.0);
  EXPECT_THROW((LossWeights{0, 0, -1, 1}.validate()), Error);
}

TEST(Backward, ZeroWeightsGiveZeroGradients) {
  const auto d = fixture::small_dataset(2, 6);
  const auto s = fixture::sample(d, 11);
  const DgPnpModel m = constant_head(DgPnpModel::init(fixture::small_model()), pose_bias(s.gt_pose));
  // the decoded ground truth sits at the kink of every distance term, so only the value is ~0
  EXPECT_LT(record_loss(m, s.correspondences, s.gt_pose, {}).total, 1e-12);
  LossWeights none;
  none.pose = 0.0;
  const DgPnpModel fresh = DgPnpModel::init(fixture::small_model());
  LossTape tape = record_loss(fresh, s.correspondences, s.gt_pose, none);
  EXPECT_EQ(tape.total, 0.0);
  for (const Tensor& g : backward(fresh, s.correspondences, tape)) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, FiniteDifferenceAgreement) {
  const auto d = fixture::small_dataset(2, 6);
  for (bool dynamic : {true, false}) {
    for (std::uint64_t seed : {21u, 22u}) {
      const auto s = fixture::sample(d, seed);
      auto cfg = fixture::small_model(2, 3, dynamic);
      cfg.init_seed = seed;
      const auto r = fixture::gradient_check(DgPnpModel::init(cfg), s, 1e-5, 1e-4);
      EXPECT_EQ(r.failed, 0u) << "worst relative error " << r.worst << " over " << r.checked;
    }
  }
}

TEST(Backward, KfaBranchFiniteDifference) {
  auto d = fixture::small_dataset(2, 6);
  d.kfa_k = 4;
  const auto s = fixture::sample(d, 23);
  auto cfg = fixture::small_model();
  cfg.kfa_k = 4;
  cfg.kfa_hidden = 5;
  cfg.kfa_dim = 3;
  cfg.layer_dims[0] = 6 + 3;
  const DgPnpModel m = DgPnpModel::init(cfg);
  ASSERT_TRUE(m.kfa.has_value());
  const auto r = fixture::gradient_check(m, s, 1e-5, 1e-4);
  EXPECT_EQ(r.failed, 0u) << "worst relative error " << r.worst;
}

TEST(Backward, ScalingLossScalesGradients) {
  const auto d = fixture::small_dataset(2, 6);
  const auto s = fixture::sample(d, 12);
  const DgPnpModel m = DgPnpModel::init(fixture::small_model());
  LossTape a = record_loss(m, s.correspondences, s.gt_pose, {}, 1.0);
  LossTape b = record_loss(m, s.correspondences, s.gt_pose, {}, 3.5);
  const auto ga = backward(m, s.correspondences, a);
  const auto gb = backward(m, s.correspondences, b);
  for (std::size_t i = 0; i < ga.size(); ++i)
    for (Eigen::Index j = 0; j < ga[i].size(); ++j) EXPECT_NEAR(gb[i].data()[j], 3.5 * ga[i].data()[j], 1e-10);
}

TEST(Backward, TapeMismatch) {
  const auto d = fixture::small_dataset(2, 6);
  const auto s = fixture::sample(d, 13);
  const auto other = fixture::sample(d, 14);
  DgPnpModel m = DgPnpModel::init(fixture::small_model());

  LossTape consumed = record_loss(m, s.correspondences, s.gt_pose, {});
  backward(m, s.correspondences, consumed);
  EXPECT_EQ(kind_of([&] { backward(m, s.correspondences, consumed); }), ErrorKind::TapeMismatch);

  LossTape t1 = record_loss(m, s.correspondences, s.gt_pose, {});
  EXPECT_EQ(kind_of([&] { backward(m, other.correspondences, t1); }), ErrorKind::TapeMismatch);

  LossTape t2 = record_loss(m, s.correspondences, s.gt_pose, {});
  const DgPnpModel copy = m;
  EXPECT_NE(copy.instance_id(), m.instance_id());
  EXPECT_EQ(kind_of([&] { backward(copy, s.correspondences, t2); }), ErrorKind::TapeMismatch);

  LossTape t3 = record_loss(m, s.correspondences, s.gt_pose, {});
  m.mark_updated();
  EXPECT_EQ(kind_of([&] { backward(m, s.correspondences, t3); }), ErrorKind::TapeMismatch);
}

TEST(Model, ParameterLayoutAndValidation) {
  const DgPnpModel m = DgPnpModel::init(DgPnpConfig{});
  // 6->64->64->128 edge convs, 128*8 -> 256 -> 9 head
  const std::size_t expect = 2 * (64 * 6 + 64 * 64 + 128 * 64) + (256 * 1024 + 256) + (9 * 256 + 9);
  EXPECT_EQ(m.parameter_count(), expect);
  EXPECT_EQ(m.parameters().size(), 6u + 4u);
  DgPnpConfig bad;
  bad.layer_dims = {5, 8};
  EXPECT_THROW(DgPnpModel::init(bad), Error);
  bad = {};
  bad.k = 0;
  EXPECT_THROW(DgPnpModel::init(bad), Error);
}

TEST(Model, InitIsDeterministic) {
  const DgPnpModel a = DgPnpModel::init(fixture::small_model()), b = DgPnpModel::init(fixture::small_model());
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i], *pb[i]);
}
