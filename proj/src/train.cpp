#include "dgecn/dgpnp.hpp"
#include "dgecn/error.hpp"
#include "dgecn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dgecn {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    fail(ErrorKind::InvalidConfig, "learning rate must be finite and >= 0");
  if (batch_size == 0) fail(ErrorKind::InvalidConfig, "batch size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    fail(ErrorKind::InvalidConfig, "Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail(ErrorKind::InvalidConfig, "Adam epsilon must be positive");
  weights.validate();
}

void adam_step(DgPnpModel& model, const std::vector<Tensor>& grads, AdamState& state, const TrainConfig& config,
               double learning_rate) {
  auto params = model.parameters();
  if (grads.size() != params.size()) fail(ErrorKind::DimensionMismatch, "one gradient per parameter tensor expected");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::Zero(p->rows(), p->cols()));
      state.v.push_back(Tensor::Zero(p->rows(), p->cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    const double* g = grads[i].data();
    for (Eigen::Index j = 0; j < params[i]->size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      p[j] -= learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.epsilon);
    }
  }
  model.mark_updated();
}

TrainResult train(DgPnpModel model, std::span<const SyntheticSample> dataset, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  config.validate();
  if (dataset.empty()) fail(ErrorKind::EmptyInput, "training set is empty");
  model.validate();

  TrainResult res;
  AdamState adam;
  std::mt19937_64 rng(config.rng_seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const std::size_t per_epoch = (dataset.size() + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(per_epoch * config.epochs);
  const double pi = std::acos(-1.0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats{epoch + 1, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      std::vector<std::vector<Tensor>> per(count);
      std::vector<LossComponents> comps(count);
      std::vector<double> totals(count);
      // Samples run in parallel; their gradients are summed below in batch order.
      parallel_for(count, [&](std::size_t b) {
        const SyntheticSample& s = dataset[order[start + b]];
        LossTape lt = record_loss(model, s.correspondences, s.gt_pose, config.weights);
        comps[b] = lt.components;
        totals[b] = lt.total;
        if (!std::isfinite(lt.total)) return;
        per[b] = backward(model, s.correspondences, lt);
      });
      for (std::size_t b = 0; b < count; ++b)
        if (!std::isfinite(totals[b]))
          fail(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch + 1) + ", sample " +
                                             std::to_string(order[start + b]) + ": loss is not finite");

      std::vector<Tensor> grads = std::move(per[0]);
      for (std::size_t b = 1; b < count; ++b)
        for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += per[b][i];
      const double inv = 1.0 / static_cast<double>(count);
      for (Tensor& g : grads) {
        g *= inv;
        if (!g.allFinite()) fail(ErrorKind::NonFiniteLoss, "gradient is not finite in epoch " + std::to_string(epoch + 1));
      }
      const double lr = config.cosine_decay
                            ? 0.5 * config.learning_rate * (1.0 + std::cos(pi * static_cast<double>(res.steps) / total_steps))
                            : config.learning_rate;
      adam_step(model, grads, adam, config, lr);
      ++res.steps;
      for (std::size_t b = 0; b < count; ++b) {
        stats.total += totals[b];
        stats.pose += comps[b].pose;
        stats.keypoint += comps[b].keypoint;
      }
    }
    const double n = static_cast<double>(dataset.size());
    stats.total /= n;
    stats.pose /= n;
    stats.keypoint /= n;
    res.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  res.model = std::move(model);
  return res;
}

}  // namespace dgecn
