#include "dgecn/dgpnp.hpp"
#include "dgecn/error.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dgecn;

namespace {

std::vector<SyntheticSample> small_set(std::size_t n, std::uint64_t seed) {
  auto d = fixture::small_dataset(2, 6);
  d.train.size = n;
  const SceneModel scene = make_scene_model(d);
  return generate_split(d, scene, Split::Train, d.train, seed);
}

bool same_params(const DgPnpModel& a, const DgPnpModel& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (*pa[i] != *pb[i]) return false;
  return true;
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesParameters) {
  const auto data = small_set(12, 1);
  const DgPnpModel init = DgPnpModel::init(fixture::small_model());
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  const TrainResult r = train(init, data, cfg);
  EXPECT_TRUE(same_params(r.model, init));
  EXPECT_EQ(r.steps, 6u);
  EXPECT_EQ(r.history.size(), 2u);
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto data = small_set(20, 2);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  cfg.rng_seed = 99;
  const TrainResult a = train(DgPnpModel::init(fixture::small_model()), data, cfg);
  const TrainResult b = train(DgPnpModel::init(fixture::small_model()), data, cfg);
  EXPECT_TRUE(same_params(a.model, b.model));
  for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].total, b.history[e].total);
  cfg.rng_seed = 100;
  const TrainResult c = train(DgPnpModel::init(fixture::small_model()), data, cfg);
  EXPECT_FALSE(same_params(a.model, c.model));
}

TEST(Train, LossDecreasesOnSmallRun) {
  const auto data = small_set(64, 3);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 15;
  cfg.learning_rate = 3e-3;
  const TrainResult r = train(DgPnpModel::init(fixture::small_model()), data, cfg);
  ASSERT_EQ(r.history.size(), 15u);
  EXPECT_LT(r.history.back().total, r.history.front().total);
}

TEST(Train, SingleSampleOverfit) {
  const auto data = small_set(1, 4);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.epochs = 500;
  const TrainResult r = train(DgPnpModel::init(fixture::small_model()), data, cfg);
  EXPECT_EQ(r.steps, 500u);
  const Pose p = forward(r.model, data[0].correspondences);
  EXPECT_LT(loss_pose(p, data[0].gt_pose, data[0].correspondences.keypoints), 1e-3 * 0.1);
}

TEST(Train, Errors) {
  const auto data = small_set(4, 5);
  TrainConfig cfg;
  EXPECT_THROW(train(DgPnpModel::init(fixture::small_model()), std::span<const SyntheticSample>{}, cfg), Error);
  cfg.batch_size = 0;
  EXPECT_THROW(train(DgPnpModel::init(fixture::small_model()), data, cfg), Error);
  cfg = {};
  cfg.learning_rate = NAN;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Train, NonFiniteLossIsReported) {
  auto data = small_set(2, 6);
  DgPnpModel m = DgPnpModel::init(fixture::small_model());
  m.head.back().bias(0, 6) = INFINITY;
  try {
    train(m, data, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteLoss);
  }
}

TEST(Adam, BiasCorrectedFirstStep) {
  DgPnpModel m = DgPnpModel::init(fixture::small_model());
  const DgPnpModel before = m;
  std::vector<Tensor> grads;
  for (const Tensor* p : m.parameters()) grads.push_back(Tensor::Constant(p->rows(), p->cols(), -2.0));
  AdamState st;
  TrainConfig cfg;
  const auto v0 = m.version();
  adam_step(m, grads, st, cfg, 0.01);
  EXPECT_EQ(m.version(), v0 + 1);
  // first step moves every entry by lr * g / (|g| + eps') = +lr
  const auto pa = m.parameters();
  const auto pb = before.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    EXPECT_LT((*pa[i] - *pb[i] - Tensor::Constant(pa[i]->rows(), pa[i]->cols(), 0.01)).cwiseAbs().maxCoeff(), 1e-9);
  grads.pop_back();
  EXPECT_THROW(adam_step(m, grads, st, cfg, 0.01), Error);
}
