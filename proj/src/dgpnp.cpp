#include "dgecn/dgpnp.hpp"

#include "dgecn/error.hpp"
#include "dgecn/simd/kernels.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numeric>

namespace dgecn {

namespace {

using ad::Tape;
using ad::Var;

double median_of(std::vector<double> v) {
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  const double hi = v[h];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h));
  return 0.5 * (lo + hi);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

// Forward of one edge convolution over the rows [offset, offset + m) given the
// precomputed projections a = X alpha^T and b = X beta^T.
void edge_conv_block(const Tensor& a, const Tensor& b, const LocalGraph& g, std::size_t offset, Tensor& out) {
  const auto d = static_cast<std::size_t>(a.cols());
  for (std::size_t i = 0; i < g.vertex_count; ++i) {
    const double* ai = a.data() + (offset + i) * d;
    const double* bi = b.data() + (offset + i) * d;
    double* oi = out.data() + (offset + i) * d;
    for (std::size_t s = 0; s < g.k; ++s) {
      const double* aj = a.data() + (offset + g.neighbor(i, s)) * d;
      const double lam = g.weight(i, s);
      for (std::size_t c = 0; c < d; ++c) {
        const double v = ai[c] - aj[c] + bi[c];
        if (v > 0.0) oi[c] += lam * v;
      }
    }
  }
}

Tensor project_rows(const Tensor& x, const Tensor& w) {
  Tensor y(x.rows(), w.rows());
  simd::kernels().matmul_nt(x.data(), w.data(), y.data(), static_cast<std::size_t>(x.rows()),
                            static_cast<std::size_t>(x.cols()), static_cast<std::size_t>(w.rows()));
  return y;
}

// Edge convolution over every cluster at once; rows are cluster-major blocks of m.
Var edge_conv_op(Tape& t, Var x, Var alpha, Var beta, const std::vector<LocalGraph>& graphs, std::size_t m) {
  const Tensor& xv = t.value(x);
  const Tensor& av = t.value(alpha);
  if (xv.cols() != av.cols() || av.rows() != t.value(beta).rows() || av.cols() != t.value(beta).cols())
    fail(ErrorKind::DimensionMismatch, "edge convolution input width differs from the layer");
  Tensor a = project_rows(xv, av);
  Tensor b = project_rows(xv, t.value(beta));
  Tensor out = Tensor::Zero(xv.rows(), av.rows());
  for (std::size_t c = 0; c < graphs.size(); ++c) edge_conv_block(a, b, graphs[c], c * m, out);

  return t.record(std::move(out), [x, alpha, beta, graphs, m, a = std::move(a), b = std::move(b)](
                                      Tape& tp, const Tensor& dy) {
    const auto& k = simd::kernels();
    const auto d = static_cast<std::size_t>(a.cols());
    const auto in = static_cast<std::size_t>(tp.value(x).cols());
    Tensor da = Tensor::Zero(a.rows(), a.cols());
    Tensor db = Tensor::Zero(b.rows(), b.cols());
    for (std::size_t c = 0; c < graphs.size(); ++c) {
      const LocalGraph& g = graphs[c];
      const std::size_t off = c * m;
      for (std::size_t i = 0; i < g.vertex_count; ++i) {
        const std::size_t vi = off + i;
        const double* ai = a.data() + vi * d;
        const double* bi = b.data() + vi * d;
        const double* gi = dy.data() + vi * d;
        for (std::size_t s = 0; s < g.k; ++s) {
          const std::size_t vj = off + g.neighbor(i, s);
          const double* aj = a.data() + vj * d;
          const double lam = g.weight(i, s);
          for (std::size_t ch = 0; ch < d; ++ch) {
            if (ai[ch] - aj[ch] + bi[ch] <= 0.0) continue;
            const double gv = lam * gi[ch];
            da(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(ch)) += gv;
            da(static_cast<Eigen::Index>(vj), static_cast<Eigen::Index>(ch)) -= gv;
            db(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(ch)) += gv;
          }
        }
      }
    }
    const Tensor& xv = tp.value(x);
    const Tensor& alv = tp.value(alpha);
    const Tensor& bev = tp.value(beta);
    Tensor& dx = tp.grad(x);
    Tensor& dal = tp.grad(alpha);
    Tensor& dbe = tp.grad(beta);
    const auto rows = static_cast<std::size_t>(xv.rows());
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = xv.data() + r * in;
      double* dxr = dx.data() + r * in;
      for (std::size_t o = 0; o < d; ++o) {
        const double ga = da.data()[r * d + o];
        const double gb = db.data()[r * d + o];
        if (ga != 0.0) {
          k.axpy(ga, xr, dal.data() + o * in, in);
          k.axpy(ga, alv.data() + o * in, dxr, in);
        }
        if (gb != 0.0) {
          k.axpy(gb, xr, dbe.data() + o * in, in);
          k.axpy(gb, bev.data() + o * in, dxr, in);
        }
      }
    }
  });
}

// 1 x 9 head output -> 1 x 12 (row-major R, t) through Gram-Schmidt.
Var decode_pose_op(Tape& t, Var head, Pose& pose_out) {
  const Tensor& h = t.value(head);
  const Eigen::Vector3d a(h(0, 0), h(0, 1), h(0, 2));
  const Eigen::Vector3d b(h(0, 3), h(0, 4), h(0, 5));
  const Rotation r = rotation_from_6d({a, b});
  const Eigen::Vector3d tr(h(0, 6), h(0, 7), h(0, 8));
  pose_out = Pose{r, tr};
  Tensor y(1, 12);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) y(0, i * 3 + j) = r.matrix()(i, j);
  y(0, 9) = tr.x();
  y(0, 10) = tr.y();
  y(0, 11) = tr.z();

  return t.record(std::move(y), [head, a, b](Tape& tp, const Tensor& dy) {
    const double n1 = a.norm();
    const Eigen::Vector3d c1 = a / n1;
    const Eigen::Vector3d u2 = b - c1.dot(b) * c1;
    const double n2 = u2.norm();
    const Eigen::Vector3d c2 = u2 / n2;
    Eigen::Vector3d g1, g2, g3;
    for (int i = 0; i < 3; ++i) {
      g1(i) = dy(0, i * 3 + 0);
      g2(i) = dy(0, i * 3 + 1);
      g3(i) = dy(0, i * 3 + 2);
    }
    // c3 = c1 x c2
    Eigen::Vector3d gc1 = g1 + c2.cross(g3);
    const Eigen::Vector3d gc2 = g2 + g3.cross(c1);
    // c2 = u2 / |u2|
    const Eigen::Vector3d gu2 = (gc2 - c2 * c2.dot(gc2)) / n2;
    // u2 = b - (c1 . b) c1
    const Eigen::Vector3d gb = gu2 - c1 * c1.dot(gu2);
    gc1 -= c1.dot(b) * gu2 + b * c1.dot(gu2);
    // c1 = a / |a|
    const Eigen::Vector3d ga = (gc1 - c1 * c1.dot(gc1)) / n1;
    Tensor& dh = tp.grad(head);
    for (int i = 0; i < 3; ++i) {
      dh(0, i) += ga(i);
      dh(0, 3 + i) += gb(i);
      dh(0, 6 + i) += dy(0, 9 + i);
    }
  });
}

// scale * (w_pose * L_p + constant) with L_p the mean keypoint distance.
Var pose_loss_op(Tape& t, Var pose, const Pose& gt, const KeypointSet& kps, double pose_weight, double constant,
                 double scale, double& lp_out) {
  const Tensor& pv = t.value(pose);
  Eigen::Matrix3d r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = pv(0, i * 3 + j);
  const Eigen::Vector3d tr(pv(0, 9), pv(0, 10), pv(0, 11));
  const std::size_t n = kps.size();
  if (n == 0) fail(ErrorKind::EmptyInput, "no keypoints");
  std::vector<Eigen::Vector3d> err(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    err[i] = (r * kps.points[i] + tr) - transform_point(gt, kps.points[i]);
    sum += err[i].norm();
  }
  lp_out = sum / static_cast<double>(n);
  Tensor y(1, 1);
  y(0, 0) = scale * (pose_weight * lp_out + constant);
  const double coef = scale * pose_weight / static_cast<double>(n);
  return t.record(std::move(y), [pose, err = std::move(err), pts = kps.points, coef](Tape& tp, const Tensor& dy) {
    Tensor& dp = tp.grad(pose);
    const double g = dy(0, 0) * coef;
    for (std::size_t i = 0; i < err.size(); ++i) {
      const double len = err[i].norm();
      if (len == 0.0) continue;
      const Eigen::Vector3d u = err[i] * (g / len);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) dp(0, a * 3 + b) += u(a) * pts[i](b);
        dp(0, 9 + a) += u(a);
      }
    }
  });
}

std::uint64_t input_hash(const Tensor& features, const Tensor& kfa, const CorrespondenceSet& corrs) {
  std::uint64_t h = kFnvBasis;
  h = fnv1a(h, features.data(), sizeof(double) * static_cast<std::size_t>(features.size()));
  h = fnv1a(h, kfa.data(), sizeof(double) * static_cast<std::size_t>(kfa.size()));
  const std::size_t m = corrs.hypotheses_per_keypoint;
  h = fnv1a(h, &m, sizeof m);
  for (const Point3& p : corrs.keypoints.points) h = fnv1a(h, p.data(), sizeof(double) * 3);
  return h;
}

void he_fill(Tensor& w, std::size_t fan_in, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = nd(rng);
}

}  // namespace

LocalGraph build_graph(const Tensor& features, std::size_t k, BandwidthMode mode) {
  return build_graph(features, features, k, mode);
}

LocalGraph build_graph(const Tensor& selection, const Tensor& weighting, std::size_t k, BandwidthMode mode) {
  const auto m = static_cast<std::size_t>(selection.rows());
  if (k < 1 || m <= k) fail(ErrorKind::ClusterTooSmall, "cluster needs more than k vertices");
  if (static_cast<std::size_t>(weighting.rows()) != m)
    fail(ErrorKind::DimensionMismatch, "selection and weighting features differ in vertex count");
  const auto& kern = simd::kernels();
  const auto ds = static_cast<std::size_t>(selection.cols());
  const auto dw = static_cast<std::size_t>(weighting.cols());

  LocalGraph g{m, k, std::vector<std::size_t>(m * k), std::vector<double>(m * k)};
  std::vector<std::pair<double, std::size_t>> cand(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      cand[c++] = {kern.squared_distance(selection.data() + i * ds, selection.data() + j * ds, ds), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t s = 0; s < k; ++s) g.neighbors[i * k + s] = cand[s].second;
  }

  // Distances in weighting space; h is their mean over all selected pairs.
  std::vector<double> dist(m * k);
  double h = 0.0;
  for (std::size_t e = 0; e < m * k; ++e) {
    const std::size_t i = e / k;
    dist[e] = std::sqrt(kern.squared_distance(weighting.data() + i * dw, weighting.data() + g.neighbors[e] * dw, dw));
    h += dist[e];
  }
  h /= static_cast<double>(m * k);

  const double uniform = 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < m; ++i) {
    if (mode == BandwidthMode::Uniform || h == 0.0) {
      std::fill_n(g.weights.begin() + static_cast<std::ptrdiff_t>(i * k), k, uniform);
      continue;
    }
    double z = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      const double d = dist[i * k + s] / h;
      g.weights[i * k + s] = std::exp(-0.5 * d * d);
      z += g.weights[i * k + s];
    }
    for (std::size_t s = 0; s < k; ++s) g.weights[i * k + s] /= z;
  }
  return g;
}

Tensor edge_conv_forward(const EdgeConvLayer& layer, const Tensor& features, const LocalGraph& graph) {
  if (static_cast<std::size_t>(features.cols()) != layer.in_dim() || layer.alpha.rows() != layer.beta.rows() ||
      layer.alpha.cols() != layer.beta.cols())
    fail(ErrorKind::DimensionMismatch, "edge convolution input width differs from the layer");
  if (static_cast<std::size_t>(features.rows()) != graph.vertex_count)
    fail(ErrorKind::DimensionMismatch, "graph and feature vertex counts differ");
  const Tensor a = project_rows(features, layer.alpha);
  const Tensor b = project_rows(features, layer.beta);
  Tensor out = Tensor::Zero(features.rows(), layer.alpha.rows());
  edge_conv_block(a, b, graph, 0, out);
  return out;
}

void DgPnpConfig::validate() const {
  if (keypoints == 0) fail(ErrorKind::InvalidConfig, "keypoint count must be positive");
  if (layer_dims.size() < 2) fail(ErrorKind::InvalidConfig, "need at least one edge-convolution layer");
  if (std::find(layer_dims.begin(), layer_dims.end(), std::size_t{0}) != layer_dims.end() ||
      std::find(head_hidden.begin(), head_hidden.end(), std::size_t{0}) != head_hidden.end())
    fail(ErrorKind::InvalidConfig, "layer widths must be positive");
  const std::size_t expected = kVertexFeatureDim + (kfa_k > 0 ? kfa_dim : 0);
  if (layer_dims.front() != expected)
    fail(ErrorKind::InvalidConfig, "first layer width must be " + std::to_string(expected));
  if (k == 0) fail(ErrorKind::InvalidConfig, "k must be at least 1");
  if (kfa_k > 0 && (kfa_hidden == 0 || kfa_dim == 0)) fail(ErrorKind::InvalidConfig, "KFA widths must be positive");
  if (!(initial_depth > 0.0) || !(fallback_depth > 0.0))
    fail(ErrorKind::InvalidConfig, "initial and fallback depths must be positive");
}

std::uint64_t DgPnpModel::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

DgPnpModel::DgPnpModel(const DgPnpModel& o) : config(o.config), layers(o.layers), head(o.head), kfa(o.kfa) {}

DgPnpModel& DgPnpModel::operator=(const DgPnpModel& o) {
  if (this == &o) return *this;
  config = o.config;
  layers = o.layers;
  head = o.head;
  kfa = o.kfa;
  id_ = next_id();
  version_ = 0;
  return *this;
}

DgPnpModel DgPnpModel::init(const DgPnpConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.init_seed);
  DgPnpModel m;
  m.config = config;
  for (std::size_t l = 0; l + 1 < config.layer_dims.size(); ++l) {
    const std::size_t in = config.layer_dims[l];
    const std::size_t out = config.layer_dims[l + 1];
    EdgeConvLayer layer{Tensor(out, in), Tensor(out, in)};
    he_fill(layer.alpha, in, 1.0, rng);
    he_fill(layer.beta, in, 1.0, rng);
    m.layers.push_back(std::move(layer));
  }
  std::size_t in = config.layer_dims.back() * config.keypoints;
  for (std::size_t w : config.head_hidden) {
    DenseLayer d{Tensor(w, in), Tensor::Zero(1, w)};
    he_fill(d.weight, in, 1.0, rng);
    m.head.push_back(std::move(d));
    in = w;
  }
  DenseLayer last{Tensor(9, in), Tensor::Zero(1, 9)};
  he_fill(last.weight, in, 0.01, rng);
  last.bias << 1, 0, 0, 0, 1, 0, 0, 0, config.initial_depth;
  m.head.push_back(std::move(last));
  if (config.kfa_k > 0) m.kfa = KfaParams::init(config.kfa_k, config.kfa_hidden, config.kfa_dim, rng);
  return m;
}

std::vector<Tensor*> DgPnpModel::parameters() {
  std::vector<Tensor*> p;
  for (auto& l : layers) {
    p.push_back(&l.alpha);
    p.push_back(&l.beta);
  }
  for (auto& d : head) {
    p.push_back(&d.weight);
    p.push_back(&d.bias);
  }
  if (kfa) {
    p.push_back(&kfa->w1);
    p.push_back(&kfa->b1);
    p.push_back(&kfa->w2);
    p.push_back(&kfa->b2);
  }
  return p;
}

std::vector<const Tensor*> DgPnpModel::parameters() const {
  std::vector<const Tensor*> p;
  for (Tensor* t : const_cast<DgPnpModel*>(this)->parameters()) p.push_back(t);
  return p;
}

std::size_t DgPnpModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += static_cast<std::size_t>(t->size());
  return n;
}

void DgPnpModel::validate() const {
  if (layers.empty() || head.empty()) fail(ErrorKind::InvalidConfig, "model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.alpha.rows() != L.beta.rows() || L.alpha.cols() != L.beta.cols())
      fail(ErrorKind::InvalidConfig, "alpha and beta differ in shape");
    if (l > 0 && L.in_dim() != layers[l - 1].out_dim()) fail(ErrorKind::InvalidConfig, "layer widths do not chain");
  }
  const std::size_t expected_in = kVertexFeatureDim + (kfa ? kfa->output_dim() : 0);
  if (layers.front().in_dim() != expected_in) fail(ErrorKind::InvalidConfig, "first layer width mismatch");
  std::size_t in = layers.back().out_dim() * config.keypoints;
  for (const auto& d : head) {
    if (static_cast<std::size_t>(d.weight.cols()) != in || d.bias.rows() != 1 || d.bias.cols() != d.weight.rows())
      fail(ErrorKind::InvalidConfig, "head widths do not chain");
    in = static_cast<std::size_t>(d.weight.rows());
  }
  if (in != 9) fail(ErrorKind::InvalidConfig, "head must end in 9 outputs");
  if (kfa) kfa->validate();
  if (config.k == 0) fail(ErrorKind::InvalidConfig, "k must be at least 1");
}

Tensor vertex_features(const CorrespondenceSet& corrs, double fallback_depth) {
  corrs.validate();
  const std::size_t n = corrs.keypoint_count();
  const std::size_t m = corrs.hypotheses_per_keypoint;
  std::vector<double> all_valid;
  for (const auto& c : corrs.hypotheses)
    if (c.has_depth()) all_valid.push_back(c.depth);
  const double sample_depth = all_valid.empty() ? fallback_depth : median_of(all_valid);

  Tensor f(static_cast<Eigen::Index>(n * m), static_cast<Eigen::Index>(kVertexFeatureDim));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> valid;
    for (std::size_t j = 0; j < m; ++j)
      if (corrs.at(i, j).has_depth()) valid.push_back(corrs.at(i, j).depth);
    const double cluster_depth = valid.empty() ? sample_depth : median_of(valid);
    for (std::size_t j = 0; j < m; ++j) {
      const Correspondence& c = corrs.at(i, j);
      const Point3 p = backproject(corrs.intrinsics, c.pixel, c.has_depth() ? c.depth : cluster_depth);
      const auto r = static_cast<Eigen::Index>(i * m + j);
      f.row(r) << p.x(), p.y(), p.z(), c.rgb.x(), c.rgb.y(), c.rgb.z();
    }
  }
  return f;
}

Tensor kfa_features(const CorrespondenceSet& corrs, std::size_t kfa_k) {
  Tensor f(static_cast<Eigen::Index>(corrs.total()), static_cast<Eigen::Index>(kfa_k));
  for (std::size_t r = 0; r < corrs.total(); ++r) {
    const auto& in = corrs.hypotheses[r].kfa_input;
    if (in.size() != kfa_k) fail(ErrorKind::DimensionMismatch, "hypothesis KFA vector length differs from k");
    for (std::size_t c = 0; c < kfa_k; ++c) f(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = in[c];
  }
  return f;
}

ForwardTrace record_forward(const DgPnpModel& model, const CorrespondenceSet& corrs) {
  model.validate();
  if (corrs.keypoint_count() != model.config.keypoints)
    fail(ErrorKind::DimensionMismatch, "correspondence set has " + std::to_string(corrs.keypoint_count()) +
                                           " keypoints, model expects " + std::to_string(model.config.keypoints));
  const std::size_t n = corrs.keypoint_count();
  const std::size_t m = corrs.hypotheses_per_keypoint;
  const std::size_t k = model.config.k;
  if (m <= k) fail(ErrorKind::ClusterTooSmall, "cluster size must exceed k");

  ForwardTrace tr;
  Tape& t = tr.tape;
  const Tensor raw = vertex_features(corrs, model.config.fallback_depth);
  const Tensor kfa_in = model.kfa ? kfa_features(corrs, model.kfa->k) : Tensor();
  tr.model_id = model.instance_id();
  tr.model_version = model.version();
  tr.input_hash = input_hash(raw, kfa_in, corrs);
  t.fingerprint = tr.input_hash;

  const auto params = model.parameters();
  std::vector<Var> pv(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) pv[i] = t.parameter(*params[i], i);

  Var x = t.constant(raw);
  const std::size_t head_base = 2 * model.layers.size();
  if (model.kfa) {
    const std::size_t kb = head_base + 2 * model.head.size();
    Var kin = t.constant(kfa_in);
    Var hidden = ad::relu(t, ad::linear(t, kin, pv[kb], pv[kb + 1]));
    Var feat = ad::linear(t, hidden, pv[kb + 2], pv[kb + 3]);
    x = ad::concat_cols(t, x, feat);
  }

  auto cluster_graphs = [&](const Tensor& selection) {
    std::vector<LocalGraph> gs;
    gs.reserve(n);
    for (std::size_t c = 0; c < n; ++c) {
      const auto off = static_cast<Eigen::Index>(c * m);
      const auto rows = static_cast<Eigen::Index>(m);
      gs.push_back(build_graph(selection.middleRows(off, rows), raw.middleRows(off, rows), k, model.config.bandwidth));
    }
    return gs;
  };

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (l == 0 || model.config.dynamic)
      tr.graphs.push_back(cluster_graphs(l == 0 ? raw : t.value(x)));
    else
      tr.graphs.push_back(tr.graphs.front());
    x = edge_conv_op(t, x, pv[2 * l], pv[2 * l + 1], tr.graphs.back(), m);
  }
  Var pooled = ad::segment_max(t, x, m);
  tr.pooled = t.value(pooled);
  Var h = ad::flatten(t, pooled);
  for (std::size_t d = 0; d < model.head.size(); ++d) {
    h = ad::linear(t, h, pv[head_base + 2 * d], pv[head_base + 2 * d + 1]);
    if (d + 1 < model.head.size()) h = ad::relu(t, h);
  }
  tr.head_output = h;
  // Diverged weights show up here first; report them as a non-finite loss.
  if (!t.value(h).allFinite()) fail(ErrorKind::NonFiniteLoss, "network output is not finite");
  tr.pose_var = decode_pose_op(t, h, tr.pose);
  if (!is_rotation(tr.pose.rotation.matrix())) fail(ErrorKind::DegenerateInput, "decoded rotation is not orthonormal");
  return tr;
}

Pose forward(const DgPnpModel& model, const CorrespondenceSet& corrs) { return record_forward(model, corrs).pose; }

Tensor pooled_descriptor(const DgPnpModel& model, const CorrespondenceSet& corrs) {
  return record_forward(model, corrs).pooled;
}

double loss_pose(const Pose& est, const Pose& gt, const KeypointSet& keypoints) {
  if (keypoints.size() == 0) return 0.0;
  double sum = 0.0;
  for (const Point3& p : keypoints.points) sum += (transform_point(est, p) - transform_point(gt, p)).norm();
  return sum / static_cast<double>(keypoints.size());
}

double loss_keypoint(const CorrespondenceSet& predicted, std::span<const Point2> gt_projections) {
  predicted.validate();
  if (predicted.total() == 0) fail(ErrorKind::EmptyInput, "no hypotheses");
  if (gt_projections.size() != predicted.keypoint_count())
    fail(ErrorKind::DimensionMismatch, "one ground-truth projection per keypoint expected");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.keypoint_count(); ++i)
    for (std::size_t j = 0; j < predicted.hypotheses_per_keypoint; ++j)
      sum += (predicted.at(i, j).pixel - gt_projections[i]).norm();
  return sum / static_cast<double>(predicted.total());
}

double loss_focal(std::span<const double> prob, std::span<const std::uint8_t> label, double alpha, double gamma) {
  if (prob.size() != label.size()) fail(ErrorKind::DimensionMismatch, "probability and label counts differ");
  if (prob.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = prob[i];
    if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::ProbabilityOutOfRange, "probability outside (0, 1)");
    const double pt = label[i] ? p : 1.0 - p;
    sum += -alpha * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return sum / static_cast<double>(prob.size());
}

void LossWeights::validate() const {
  for (double w : {depth, segmentation, keypoint, pose})
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::InvalidConfig, "loss weights must be finite and >= 0");
}

double loss_total(const LossComponents& c, const LossWeights& w) {
  w.validate();
  return w.depth * c.depth + w.segmentation * c.segmentation + w.keypoint * c.keypoint + w.pose * c.pose;
}

LossTape record_loss(const DgPnpModel& model, const CorrespondenceSet& corrs, const Pose& gt, const LossWeights& weights,
                     double loss_scale) {
  weights.validate();
  LossTape lt{record_forward(model, corrs), {}, {}, 0.0, false};
  // The keypoint term compares fixed inputs with fixed projections, so it
  // enters the tape as a constant.
  std::vector<Point2> gt_px;
  gt_px.reserve(corrs.keypoint_count());
  for (const Point3& p : corrs.keypoints.points) gt_px.push_back(project(corrs.intrinsics, transform_point(gt, p)));
  lt.components.keypoint = loss_keypoint(corrs, gt_px);
  const double constant = weights.keypoint * lt.components.keypoint;
  lt.loss = pose_loss_op(lt.trace.tape, lt.trace.pose_var, gt, corrs.keypoints, weights.pose, constant, loss_scale,
                         lt.components.pose);
  lt.total = loss_scale * loss_total(lt.components, weights);
  return lt;
}

std::vector<Tensor> backward(const DgPnpModel& model, const CorrespondenceSet& corrs, LossTape& tape) {
  if (tape.consumed) fail(ErrorKind::TapeMismatch, "tape already used for a backward pass");
  if (tape.trace.model_id != model.instance_id()) fail(ErrorKind::TapeMismatch, "tape was recorded for another model");
  if (tape.trace.model_version != model.version())
    fail(ErrorKind::TapeMismatch, "model parameters changed since the tape was recorded");
  const Tensor raw = vertex_features(corrs, model.config.fallback_depth);
  const Tensor kfa_in = model.kfa ? kfa_features(corrs, model.kfa->k) : Tensor();
  if (input_hash(raw, kfa_in, corrs) != tape.trace.input_hash)
    fail(ErrorKind::TapeMismatch, "tape was recorded on different correspondences");

  tape.consumed = true;
  tape.trace.tape.backward(tape.loss);
  const auto params = model.parameters();
  std::vector<Tensor> grads(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) grads[i] = Tensor::Zero(params[i]->rows(), params[i]->cols());
  for (const auto& pg : tape.trace.tape.parameter_grads())
    if (pg.grad) grads[pg.slot] += *pg.grad;
  return grads;
}

}  // namespace dgecn
