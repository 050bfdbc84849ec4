#include "dgecn/depth.hpp"

#include "dgecn/error.hpp"
#include "dgecn/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace dgecn {

DepthMap::DepthMap(std::uint32_t width, std::uint32_t height)
    : width_(width),
      height_(height),
      depth_(static_cast<std::size_t>(width) * height, std::numeric_limits<double>::quiet_NaN()),
      valid_(static_cast<std::size_t>(width) * height, 0) {}

double DepthMap::at(std::uint32_t u, std::uint32_t v) const {
  const std::size_t i = index(u, v);
  return valid_[i] ? depth_[i] : std::numeric_limits<double>::quiet_NaN();
}

void DepthMap::set(std::uint32_t u, std::uint32_t v, double depth) {
  if (!std::isfinite(depth) || !(depth > 0.0)) fail(ErrorKind::InvalidDepth, "depth must be finite and positive");
  const std::size_t i = index(u, v);
  depth_[i] = depth;
  valid_[i] = 1;
}

void DepthMap::invalidate(std::uint32_t u, std::uint32_t v) {
  const std::size_t i = index(u, v);
  depth_[i] = std::numeric_limits<double>::quiet_NaN();
  valid_[i] = 0;
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

double UncertaintyMask::fraction() const {
  if (uncertain.empty()) return 0.0;
  return static_cast<double>(std::count(uncertain.begin(), uncertain.end(), std::uint8_t{1})) /
         static_cast<double>(uncertain.size());
}

UncertaintyMask uncertainty_mask(const DepthMap& a, const DepthMap& b, double tau) {
  if (!a.same_shape(b)) fail(ErrorKind::DimensionMismatch, "depth maps differ in size");
  if (!(tau > 0.0)) fail(ErrorKind::InvalidConfig, "uncertainty threshold must be positive");
  UncertaintyMask m{a.width(), a.height(), std::vector<std::uint8_t>(static_cast<std::size_t>(a.width()) * a.height())};
  for (std::uint32_t v = 0; v < a.height(); ++v)
    for (std::uint32_t u = 0; u < a.width(); ++u) {
      const bool both = a.valid(u, v) && b.valid(u, v);
      m.uncertain[static_cast<std::size_t>(v) * a.width() + u] = (!both || std::abs(a.at(u, v) - b.at(u, v)) > tau);
    }
  return m;
}

DepthMap refine_depth(const DepthMap& a, const DepthMap& b, double tau, RefineMode mode) {
  const UncertaintyMask mask = uncertainty_mask(a, b, tau);
  DepthMap out = a;
  for (std::uint32_t v = 0; v < a.height(); ++v)
    for (std::uint32_t u = 0; u < a.width(); ++u) {
      if (!mask.at(u, v)) continue;
      if (mode == RefineMode::Mean && a.valid(u, v) && b.valid(u, v))
        out.set(u, v, 0.5 * (a.at(u, v) + b.at(u, v)));
      else
        out.invalidate(u, v);
    }
  return out;
}

DepthMap perturb_depth(const DepthMap& truth, double noise_std, std::mt19937_64& rng) {
  DepthMap out(truth.width(), truth.height());
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  for (std::uint32_t v = 0; v < truth.height(); ++v)
    for (std::uint32_t u = 0; u < truth.width(); ++u) {
      if (!truth.valid(u, v)) continue;
      const double d = truth.at(u, v) + (noise_std > 0.0 ? noise(rng) : 0.0);
      if (d > 0.0) out.set(u, v, d);
    }
  return out;
}

KfaParams KfaParams::init(std::size_t k, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  KfaParams p;
  p.k = k;
  std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / static_cast<double>(k)));
  std::normal_distribution<double> n2(0.0, std::sqrt(2.0 / static_cast<double>(hidden)));
  p.w1 = Tensor(hidden, k);
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = n1(rng);
  p.b1 = Tensor::Zero(1, hidden);
  p.w2 = Tensor(out, hidden);
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = n2(rng);
  p.b2 = Tensor::Zero(1, out);
  return p;
}

void KfaParams::validate() const {
  if (k == 0) fail(ErrorKind::InvalidConfig, "KFA needs k >= 1");
  if (window_radius < 1) fail(ErrorKind::InvalidConfig, "KFA window radius must be >= 1");
  if (w1.cols() != static_cast<Eigen::Index>(k) || b1.cols() != w1.rows() || b1.rows() != 1 ||
      w2.cols() != w1.rows() || b2.cols() != w2.rows() || b2.rows() != 1)
    fail(ErrorKind::InvalidConfig, "KFA MLP shapes do not chain");
}

std::vector<double> kfa_gather(const DepthMap& depth, const Point2& pixel, std::size_t k, int window_radius) {
  const long cu = std::lround(pixel.x());
  const long cv = std::lround(pixel.y());
  if (cu < 0 || cv < 0 || cu >= static_cast<long>(depth.width()) || cv >= static_cast<long>(depth.height()) ||
      !depth.valid(static_cast<std::uint32_t>(cu), static_cast<std::uint32_t>(cv)))
    fail(ErrorKind::InvalidDepth, "KFA query pixel has no valid depth");

  // (squared image distance, row, column) orders by distance then row-major.
  std::vector<std::tuple<long, long, long>> cand;
  for (long v = std::max(0L, cv - window_radius); v <= std::min<long>(depth.height() - 1, cv + window_radius); ++v)
    for (long u = std::max(0L, cu - window_radius); u <= std::min<long>(depth.width() - 1, cu + window_radius); ++u) {
      if (u == cu && v == cv) continue;
      if (!depth.valid(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v))) continue;
      cand.emplace_back((u - cu) * (u - cu) + (v - cv) * (v - cv), v, u);
    }
  if (cand.size() < k) fail(ErrorKind::InsufficientNeighbors, "not enough valid pixels in the KFA window");
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());

  const double center = depth.at(static_cast<std::uint32_t>(cu), static_cast<std::uint32_t>(cv));
  std::vector<double> diffs(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto [d2, v, u] = cand[i];
    diffs[i] = depth.at(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)) - center;
  }
  std::sort(diffs.begin(), diffs.end());
  return diffs;
}

std::vector<double> kfa_mlp(const KfaParams& params, const std::vector<double>& diffs) {
  params.validate();
  if (diffs.size() != params.k) fail(ErrorKind::DimensionMismatch, "KFA input length differs from k");
  const auto& kern = simd::kernels();
  const auto hidden = static_cast<std::size_t>(params.w1.rows());
  const std::size_t out_dim = params.output_dim();
  std::vector<double> h(hidden);
  kern.matmul_nt(diffs.data(), params.w1.data(), h.data(), 1, params.k, hidden);
  for (std::size_t i = 0; i < hidden; ++i) h[i] = std::max(0.0, h[i] + params.b1(0, static_cast<Eigen::Index>(i)));
  std::vector<double> out(out_dim);
  kern.matmul_nt(h.data(), params.w2.data(), out.data(), 1, hidden, out_dim);
  for (std::size_t i = 0; i < out_dim; ++i) out[i] += params.b2(0, static_cast<Eigen::Index>(i));
  return out;
}

std::vector<double> kfa_aggregate(const DepthMap& depth, const Point2& pixel, const KfaParams& params) {
  params.validate();
  return kfa_mlp(params, kfa_gather(depth, pixel, params.k, params.window_radius));
}

}  // namespace dgecn
