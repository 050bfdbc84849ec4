#include "dgecn/simd/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

using namespace dgecn::simd;

namespace {

std::vector<double> rnd(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Sizes straddle every vector width and remainder path.
const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 100, 1023};

void near_rel(double a, double b, double tol) { EXPECT_LE(std::abs(a - b), tol * std::max(1.0, std::abs(b))); }

}  // namespace

TEST(Kernels, ScalarAlwaysAvailable) {
  EXPECT_TRUE(available(Backend::Scalar));
  EXPECT_EQ(kernels(Backend::Scalar).backend, Backend::Scalar);
  EXPECT_FALSE(available_backends().empty());
}

TEST(Kernels, UnavailableBackendThrows) {
  for (Backend b : {Backend::Avx2, Backend::Neon})
    if (!available(b)) EXPECT_THROW(kernels(b), std::invalid_argument);
}

TEST(Kernels, SetBackendSwitchesActiveTable) {
  const Backend before = active_backend();
  set_backend(Backend::Scalar);
  EXPECT_EQ(kernels().backend, Backend::Scalar);
  set_backend(before);
  EXPECT_EQ(active_backend(), before);
}

class KernelEquivalence : public ::testing::TestWithParam<Backend> {};

TEST_P(KernelEquivalence, DotAxpyDistanceMatchScalar) {
  const auto& ref = kernels(Backend::Scalar);
  const auto& k = kernels(GetParam());
  std::mt19937_64 rng(11);
  for (std::size_t n : kSizes) {
    const auto a = rnd(n, rng);
    const auto b = rnd(n, rng);
    near_rel(k.dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), 1e-12);
    near_rel(k.squared_distance(a.data(), b.data(), n), ref.squared_distance(a.data(), b.data(), n), 1e-12);
    auto y1 = b;
    auto y2 = b;
    ref.axpy(0.37, a.data(), y1.data(), n);
    k.axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) near_rel(y2[i], y1[i], 1e-15);
  }
}

TEST_P(KernelEquivalence, MinSquaredDistanceIsBitIdentical) {
  const auto& ref = kernels(Backend::Scalar);
  const auto& k = kernels(GetParam());
  std::mt19937_64 rng(12);
  for (std::size_t n : kSizes) {
    const auto xs = rnd(n, rng);
    const auto ys = rnd(n, rng);
    const auto zs = rnd(n, rng);
    for (int q = 0; q < 5; ++q) {
      const auto p = rnd(3, rng);
      EXPECT_EQ(k.min_squared_distance_soa(p[0], p[1], p[2], xs.data(), ys.data(), zs.data(), n),
                ref.min_squared_distance_soa(p[0], p[1], p[2], xs.data(), ys.data(), zs.data(), n));
    }
  }
}

TEST_P(KernelEquivalence, MatmulMatchesScalar) {
  const auto& ref = kernels(Backend::Scalar);
  const auto& k = kernels(GetParam());
  std::mt19937_64 rng(13);
  for (std::size_t rows : {1, 3, 10}) {
    for (std::size_t in : {1, 5, 6, 64}) {
      for (std::size_t out : {1, 3, 4, 9, 64, 130}) {
        const auto x = rnd(rows * in, rng);
        const auto w = rnd(out * in, rng);
        std::vector<double> y1(rows * out), y2(rows * out);
        ref.matmul_nt(x.data(), w.data(), y1.data(), rows, in, out);
        k.matmul_nt(x.data(), w.data(), y2.data(), rows, in, out);
        for (std::size_t i = 0; i < y1.size(); ++i) near_rel(y2[i], y1[i], 1e-12);
      }
    }
  }
}

TEST(Kernels, ScalarMatmulAgainstLoop) {
  const auto& k = kernels(Backend::Scalar);
  std::mt19937_64 rng(14);
  const std::size_t rows = 4, in = 7, out = 5;
  const auto x = rnd(rows * in, rng);
  const auto w = rnd(out * in, rng);
  std::vector<double> y(rows * out);
  k.matmul_nt(x.data(), w.data(), y.data(), rows, in, out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0;
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w[o * in + i];
      near_rel(y[r * out + o], s, 1e-14);
    }
}

INSTANTIATE_TEST_SUITE_P(Backends, KernelEquivalence, ::testing::ValuesIn(available_backends()),
                         [](const auto& info) { return std::string(name(info.param)); });
