#pragma once

// Dynamic-graph PnP: every keypoint's cluster of m image hypotheses is a
// small point cloud with 6-d vertex features (back-projected xyz, rgb). A
// stack of edge convolutions over k-NN graphs, a max-pool per cluster and an
// MLP head regress the pose directly.

#include "dgecn/autodiff.hpp"
#include "dgecn/depth.hpp"
#include "dgecn/geometry.hpp"
#include "dgecn/synth.hpp"
#include "dgecn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace dgecn {

inline constexpr std::size_t kVertexFeatureDim = 6;

enum class BandwidthMode {
  Adaptive,  // Gaussian kernel, h = mean neighbor distance of the cluster
  Uniform,   // lambda = 1/k
};

struct LocalGraph {
  std::size_t vertex_count = 0;
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;  // vertex-major, k per vertex, nearest first
  std::vector<double> weights;         // lambda, same layout

  std::size_t neighbor(std::size_t i, std::size_t s) const { return neighbors[i * k + s]; }
  double weight(std::size_t i, std::size_t s) const { return weights[i * k + s]; }
};

// k nearest by Euclidean distance (ties to the lowest index, no self-loops),
// lambda_ij = exp(-d_ij^2 / 2h^2) normalized per vertex. Throws ClusterTooSmall
// unless m > k >= 1.
LocalGraph build_graph(const Tensor& features, std::size_t k, BandwidthMode mode = BandwidthMode::Adaptive);
// Neighbors chosen in `selection` space, weights measured in `weighting` space.
LocalGraph build_graph(const Tensor& selection, const Tensor& weighting, std::size_t k,
                       BandwidthMode mode = BandwidthMode::Adaptive);

struct EdgeConvLayer {
  Tensor alpha;  // out x in
  Tensor beta;   // out x in

  std::size_t in_dim() const { return static_cast<std::size_t>(alpha.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(alpha.rows()); }
};

// f'_i = sum_j lambda_ij * relu(alpha (f_i - f_j) + beta f_i). Throws DimensionMismatch.
Tensor edge_conv_forward(const EdgeConvLayer& layer, const Tensor& features, const LocalGraph& graph);

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // 1 x out
};

struct DgPnpConfig {
  std::size_t keypoints = 8;
  std::vector<std::size_t> layer_dims{6, 64, 64, 128};  // first entry must equal the vertex feature width
  std::vector<std::size_t> head_hidden{256};
  std::size_t k = 8;
  bool dynamic = true;
  BandwidthMode bandwidth = BandwidthMode::Adaptive;
  // KFA branch: 0 disables it. When on, layer_dims[0] must be 6 + kfa_dim.
  std::size_t kfa_k = 0;
  std::size_t kfa_hidden = 32;
  std::size_t kfa_dim = kDefaultKfaDim;
  double initial_depth = 0.9;    // translation-z bias of the head at init
  double fallback_depth = 0.9;   // used when a whole sample has no valid depth
  std::uint64_t init_seed = 1;

  void validate() const;
};

class DgPnpModel {
 public:
  DgPnpModel() = default;
  DgPnpModel(const DgPnpModel& o);
  DgPnpModel& operator=(const DgPnpModel& o);
  DgPnpModel(DgPnpModel&&) noexcept = default;
  DgPnpModel& operator=(DgPnpModel&&) noexcept = default;

  // He-initialized edge convs and head; the last head layer starts with small
  // weights and a bias that decodes to (identity, (0, 0, initial_depth)).
  static DgPnpModel init(const DgPnpConfig& config);

  DgPnpConfig config;
  std::vector<EdgeConvLayer> layers;
  std::vector<DenseLayer> head;
  std::optional<KfaParams> kfa;

  // Fixed order: layer alphas/betas, head weights/biases, then KFA tensors.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;

  // Throws InvalidConfig when shapes do not chain.
  void validate() const;

  // Identity of this instance and how many optimizer updates it has seen;
  // tapes remember both so a stale tape cannot be replayed.
  std::uint64_t instance_id() const noexcept { return id_; }
  std::uint64_t version() const noexcept { return version_; }
  void mark_updated() noexcept { ++version_; }

 private:
  std::uint64_t id_ = next_id();
  std::uint64_t version_ = 0;
  static std::uint64_t next_id();
};

// (n*m) x 6 features in hypothesis order. Hypotheses without depth are
// back-projected at the median valid depth of their cluster, else of the
// whole sample, else at `fallback_depth`.
Tensor vertex_features(const CorrespondenceSet& corrs, double fallback_depth);

// (n*m) x kfa_k matrix of stored KFA difference vectors. Throws DimensionMismatch
// when a hypothesis carries a vector of the wrong length.
Tensor kfa_features(const CorrespondenceSet& corrs, std::size_t kfa_k);

struct ForwardTrace {
  ad::Tape tape;
  ad::Var head_output;  // 1 x 9: rotation 6D (two columns) then translation
  ad::Var pose_var;     // 1 x 12: row-major R then t
  Pose pose;
  Tensor pooled;                          // n x last layer dim
  std::vector<std::vector<LocalGraph>> graphs;  // [layer][cluster]
  std::uint64_t model_id = 0;
  std::uint64_t model_version = 0;
  std::uint64_t input_hash = 0;
};

// Throws NonFiniteLoss when the head output is not finite (diverged weights).
ForwardTrace record_forward(const DgPnpModel& model, const CorrespondenceSet& corrs);
Pose forward(const DgPnpModel& model, const CorrespondenceSet& corrs);
// Max-pooled per-cluster descriptors (n x last layer dim).
Tensor pooled_descriptor(const DgPnpModel& model, const CorrespondenceSet& corrs);

// (1/n) sum_i |(R* p_i + t*) - (R p_i + t)|
double loss_pose(const Pose& est, const Pose& gt, const KeypointSet& keypoints);
// Mean over all n*m hypotheses of the pixel distance to their keypoint's
// ground-truth projection. Throws EmptyInput / DimensionMismatch.
double loss_keypoint(const CorrespondenceSet& predicted, std::span<const Point2> gt_projections);
// Mean of -alpha (1 - p_t)^gamma log p_t. Throws ProbabilityOutOfRange unless
// every p is in (0, 1), DimensionMismatch on a length mismatch.
double loss_focal(std::span<const double> prob, std::span<const std::uint8_t> label, double alpha = 0.25,
                  double gamma = 2.0);

struct LossWeights {
  double depth = 0.0;         // lambda_1
  double segmentation = 0.0;  // lambda_2
  double keypoint = 0.0;      // lambda_3
  double pose = 1.0;          // lambda_4

  void validate() const;
};

struct LossComponents {
  double depth = 0.0;
  double segmentation = 0.0;
  double keypoint = 0.0;
  double pose = 0.0;
};

double loss_total(const LossComponents& c, const LossWeights& w);

// Forward pass plus the loss, recorded for backward().
struct LossTape {
  ForwardTrace trace;
  ad::Var loss;
  LossComponents components;
  double total = 0.0;
  bool consumed = false;
};

LossTape record_loss(const DgPnpModel& model, const CorrespondenceSet& corrs, const Pose& gt, const LossWeights& weights,
                     double loss_scale = 1.0);

// Gradients aligned with model.parameters(). Throws TapeMismatch when the tape
// was recorded for another model instance, an older parameter version or
// different inputs, or was already consumed.
std::vector<Tensor> backward(const DgPnpModel& model, const CorrespondenceSet& corrs, LossTape& tape);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t rng_seed = 0;
  LossWeights weights;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Cosine decay from learning_rate to 0 over all steps of the run. A fixed
  // step size leaves Adam circling the optimum of the (non-smooth) pose loss.
  bool cosine_decay = true;

  void validate() const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update of every parameter; bumps model.version().
void adam_step(DgPnpModel& model, const std::vector<Tensor>& grads, AdamState& state, const TrainConfig& config,
               double learning_rate);

struct EpochStats {
  std::size_t epoch = 0;
  double total = 0.0;
  double pose = 0.0;
  double keypoint = 0.0;
};

struct TrainResult {
  DgPnpModel model;
  std::vector<EpochStats> history;
  std::size_t steps = 0;
};

// Shuffled mini-batches (seeded by rng_seed); per-batch gradients are the mean
// of per-sample gradients summed in sample order. Throws EmptyInput and
// NonFiniteLoss.
TrainResult train(DgPnpModel model, std::span<const SyntheticSample> dataset, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace dgecn
