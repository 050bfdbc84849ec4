#include "dgecn/error.hpp"
#include "dgecn/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace dgecn;

namespace {

std::vector<Point3> cloud(std::size_t n, std::mt19937_64& rng, double scale = 0.1) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Point3> v(n);
  for (auto& p : v) p = Point3(u(rng), u(rng), u(rng));
  return v;
}

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> xy(-0.2, 0.2), z(0.6, 1.5);
  return Pose(Rotation::from_matrix(oracle::random_rotation(rng)), {xy(rng), xy(rng), z(rng)});
}

}  // namespace

TEST(ModelDiameter, Examples) {
  EXPECT_DOUBLE_EQ(model_diameter(MeshModel({{0, 0, 0}, {1, 0, 0}})), 1.0);
  std::vector<Point3> cube;
  for (int i = 0; i < 8; ++i) cube.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  EXPECT_NEAR(model_diameter(MeshModel(cube)), std::sqrt(3.0), 1e-15);
  EXPECT_THROW(model_diameter(MeshModel({{0, 0, 0}})), Error);
  EXPECT_THROW(MeshModel({}), Error);
}

TEST(ModelDiameter, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto pts = cloud(50, rng);
    EXPECT_NEAR(model_diameter(MeshModel(pts)), oracle::diameter(pts), 1e-15);
  }
}

TEST(Add, Examples) {
  std::mt19937_64 rng(2);
  const MeshModel mesh(cloud(20, rng));
  const Pose gt = random_pose(rng);
  EXPECT_EQ(add(gt, gt, mesh), 0.0);
  const Pose off(gt.rotation, gt.translation + Eigen::Vector3d(0, 0, 0.05));
  EXPECT_NEAR(add(off, gt, mesh), 0.05, 1e-15);
}

TEST(Add, MatchesOracleAndIsPermutationInvariant) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    auto pts = cloud(20, rng);
    const Pose a = random_pose(rng), b = random_pose(rng);
    const double v = add(a, b, MeshModel(pts));
    EXPECT_LE(std::abs(v - oracle::add(a.rotation.matrix(), a.translation, b.rotation.matrix(), b.translation, pts)),
              1e-12);
    std::shuffle(pts.begin(), pts.end(), rng);
    EXPECT_NEAR(add(a, b, MeshModel(pts)), v, 1e-12);
  }
}

TEST(Add, InvariantUnderCommonLeftTransform) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const MeshModel mesh(cloud(20, rng));
    const Pose a = random_pose(rng), b = random_pose(rng), g = random_pose(rng);
    EXPECT_NEAR(add(g * a, g * b, mesh), add(a, b, mesh), 1e-12);
  }
}

TEST(AddS, MatchesOracleAndBoundedByAdd) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 1000; ++t) {
    const auto pts = cloud(30, rng);
    const MeshModel mesh(pts);
    const Pose a = random_pose(rng), b = random_pose(rng);
    const double s = add_s(a, b, mesh);
    EXPECT_LE(std::abs(s - oracle::add_s(a.rotation.matrix(), a.translation, b.rotation.matrix(), b.translation, pts)),
              1e-12);
    EXPECT_LE(s, add(a, b, mesh) + 1e-12);
    EXPECT_GE(s, 0.0);
  }
  const MeshModel mesh(cloud(30, rng));
  const Pose p = random_pose(rng);
  EXPECT_EQ(add_s(p, p, mesh), 0.0);
}

TEST(AddS, PermutationInvariant) {
  std::mt19937_64 rng(6);
  auto pts = cloud(40, rng);
  const Pose a = random_pose(rng), b = random_pose(rng);
  const double s = add_s(a, b, MeshModel(pts));
  for (int t = 0; t < 10; ++t) {
    std::shuffle(pts.begin(), pts.end(), rng);
    EXPECT_NEAR(add_s(a, b, MeshModel(pts)), s, 1e-12);
  }
}

TEST(Rep, Examples) {
  std::mt19937_64 rng(7);
  const MeshModel mesh(cloud(20, rng));
  const CameraIntrinsics intr;
  const Pose gt = random_pose(rng);
  EXPECT_EQ(rep(gt, gt, mesh, intr), 0.0);
  const Pose farther(gt.rotation, gt.translation + Eigen::Vector3d(0, 0, 0.3));
  EXPECT_GT(rep(farther, gt, mesh, intr), 0.0);
  const Pose behind(gt.rotation, Eigen::Vector3d(0, 0, -2));
  EXPECT_THROW(rep(behind, gt, mesh, intr), Error);
}

TEST(Rep, MatchesOracle) {
  std::mt19937_64 rng(8);
  const CameraIntrinsics intr;
  for (int t = 0; t < 200; ++t) {
    const auto pts = cloud(20, rng);
    const Pose a = random_pose(rng), b = random_pose(rng);
    const double o = oracle::rep(a.rotation.matrix(), a.translation, b.rotation.matrix(), b.translation, pts, 800, 320,
                                 240);
    EXPECT_LE(std::abs(rep(a, b, MeshModel(pts), intr) - o), 1e-10);
  }
}

TEST(Thresholds, StrictBoundaries) {
  EXPECT_TRUE(is_add_correct(0.009, 0.1));
  EXPECT_FALSE(is_add_correct(0.1, 1.0));  // exactly at 10% of the diameter
  EXPECT_FALSE(is_add_correct(0.1 * 0.1, 0.1));
  EXPECT_TRUE(is_add_correct(0.0, 1e-6));
  EXPECT_TRUE(is_rep_correct(4.99));
  EXPECT_FALSE(is_rep_correct(5.0));
  EXPECT_TRUE(is_rep_correct(0.0));
}

TEST(Auc, Examples) {
  const std::vector<double> zeros(10, 0.0);
  EXPECT_DOUBLE_EQ(auc_add_s(zeros), 1.0);
  const std::vector<double> far{0.2, 0.11, 0.5};
  EXPECT_DOUBLE_EQ(auc_add_s(far), 0.0);
  const std::vector<double> mid{0.05};
  EXPECT_DOUBLE_EQ(auc_add_s(mid, 0.10), 0.5);
  EXPECT_THROW(auc_add_s(std::vector<double>{}), Error);
  EXPECT_THROW(auc_add_s(std::vector<double>{-0.1}), Error);
}

TEST(Auc, MatchesRiemannOracle) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 0.15);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> d(1 + t * 3);
    for (auto& x : d) x = u(rng);
    EXPECT_NEAR(auc_add_s(d), oracle::auc_riemann(d, 0.10), 1e-4);
  }
}

TEST(Auc, MonotoneUnderIncrease) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 0.12), inc(0, 0.02);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> d(25);
    for (auto& x : d) x = u(rng);
    auto e = d;
    for (auto& x : e) x += inc(rng);
    EXPECT_LE(auc_add_s(e), auc_add_s(d) + 1e-15);
  }
}

TEST(EvaluatePose, ReportConsistency) {
  std::mt19937_64 rng(11);
  const auto pts = cloud(30, rng);
  const MeshModel mesh(pts);
  const CameraIntrinsics intr;
  const double dia = model_diameter(mesh);
  const Pose gt = random_pose(rng);
  const MetricReport same = evaluate_pose(gt, gt, mesh, intr, dia);
  EXPECT_TRUE(same.add_correct);
  EXPECT_TRUE(same.rep_correct);
  const Pose off(gt.rotation, gt.translation + Eigen::Vector3d(0.5, 0, 0));
  const MetricReport r = evaluate_pose(off, gt, mesh, intr, dia);
  EXPECT_FALSE(r.add_correct);
  EXPECT_FALSE(r.rep_correct);
  EXPECT_LE(r.add_s, r.add + 1e-12);
}
