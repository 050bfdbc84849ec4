#pragma once

#include "dgecn/geometry.hpp"
#include "dgecn/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace dgecn {

// Dense depth raster with a validity mask. Valid pixels always hold a finite,
// positive depth in meters.
class DepthMap {
 public:
  DepthMap() = default;
  // All pixels start invalid.
  DepthMap(std::uint32_t width, std::uint32_t height);

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }

  bool valid(std::uint32_t u, std::uint32_t v) const { return valid_[index(u, v)] != 0; }
  // Depth of a valid pixel; NaN for an invalid one.
  double at(std::uint32_t u, std::uint32_t v) const;
  // Throws InvalidDepth for non-finite or non-positive depth.
  void set(std::uint32_t u, std::uint32_t v, double depth);
  void invalidate(std::uint32_t u, std::uint32_t v);

  std::size_t valid_count() const;
  bool same_shape(const DepthMap& o) const noexcept { return width_ == o.width_ && height_ == o.height_; }

 private:
  std::size_t index(std::uint32_t u, std::uint32_t v) const { return static_cast<std::size_t>(v) * width_ + u; }

  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<double> depth_;
  std::vector<std::uint8_t> valid_;
};

struct UncertaintyMask {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> uncertain;  // row-major, 1 = uncertain

  bool at(std::uint32_t u, std::uint32_t v) const { return uncertain[static_cast<std::size_t>(v) * width + u] != 0; }
  double fraction() const;
};

enum class RefineMode { Remove, Mean };

inline constexpr double kDefaultUncertaintyThreshold = 0.05;  // meters

// Uncertain where |a - b| > tau, or where either map is invalid.
// Throws DimensionMismatch for different shapes, InvalidConfig for tau <= 0.
UncertaintyMask uncertainty_mask(const DepthMap& a, const DepthMap& b, double tau);

// Remove: `a` with uncertain pixels invalidated. Mean: uncertain pixels valid
// in both maps take (a + b) / 2, the rest become invalid. Certain pixels keep a.
DepthMap refine_depth(const DepthMap& a, const DepthMap& b, double tau, RefineMode mode = RefineMode::Remove);

// Independent Gaussian perturbation of every valid pixel; pixels pushed to
// non-positive depth become invalid. Stands in for one learned depth estimate.
DepthMap perturb_depth(const DepthMap& truth, double noise_std, std::mt19937_64& rng);

// k-NN feature aggregation over the depth channel. The MLP maps the sorted
// depth differences of the k nearest valid pixels to a local feature:
// feature = W2 * relu(W1 * x + b1) + b2.
struct KfaParams {
  std::size_t k = 8;
  int window_radius = 3;  // search box is (2r+1)^2 pixels around the query
  Tensor w1;              // hidden x k
  Tensor b1;              // 1 x hidden
  Tensor w2;              // out x hidden
  Tensor b2;              // 1 x out

  static KfaParams init(std::size_t k, std::size_t hidden, std::size_t out, std::mt19937_64& rng);
  std::size_t output_dim() const { return static_cast<std::size_t>(w2.rows()); }
  // Throws InvalidConfig when shapes do not chain or k == 0.
  void validate() const;
};

inline constexpr std::size_t kDefaultKfaDim = 16;

// Sorted (ascending) differences d_j - d_i to the k nearest valid pixels
// (excluding the query pixel, ties by row-major order) inside the search
// window. The query pixel is rounded to the nearest integer pixel.
// Throws InvalidDepth if the query pixel is invalid or outside the map and
// InsufficientNeighbors when the window holds fewer than k valid pixels.
std::vector<double> kfa_gather(const DepthMap& depth, const Point2& pixel, std::size_t k, int window_radius);

// MLP applied to a gathered difference vector of length params.k.
std::vector<double> kfa_mlp(const KfaParams& params, const std::vector<double>& diffs);

std::vector<double> kfa_aggregate(const DepthMap& depth, const Point2& pixel, const KfaParams& params);

}  // namespace dgecn
