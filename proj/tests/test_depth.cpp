#include "dgecn/depth.hpp"
#include "dgecn/error.hpp"
#include "dgecn/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <random>
#include <tuple>

using namespace dgecn;

namespace {

DepthMap random_map(std::uint32_t w, std::uint32_t h, std::mt19937_64& rng, double invalid_p = 0.1) {
  DepthMap m(w, h);
  std::uniform_real_distribution<double> d(0.5, 2.0), u(0, 1);
  for (std::uint32_t v = 0; v < h; ++v)
    for (std::uint32_t x = 0; x < w; ++x)
      if (u(rng) >= invalid_p) m.set(x, v, d(rng));
  return m;
}

DepthMap constant_map(std::uint32_t w, std::uint32_t h, double d) {
  DepthMap m(w, h);
  for (std::uint32_t v = 0; v < h; ++v)
    for (std::uint32_t x = 0; x < w; ++x) m.set(x, v, d);
  return m;
}

// Window scan, sort by (squared distance, row, column).
std::vector<double> gather_oracle(const DepthMap& m, int qu, int qv, std::size_t k, int r) {
  std::vector<std::tuple<int, int, int>> cand;
  for (int v = qv - r; v <= qv + r; ++v)
    for (int u = qu - r; u <= qu + r; ++u) {
      if (u < 0 || v < 0 || u >= static_cast<int>(m.width()) || v >= static_cast<int>(m.height())) continue;
      if (u == qu && v == qv) continue;
      if (!m.valid(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v))) continue;
      cand.emplace_back((u - qu) * (u - qu) + (v - qv) * (v - qv), v, u);
    }
  std::sort(cand.begin(), cand.end());
  std::vector<double> out;
  const double di = m.at(static_cast<std::uint32_t>(qu), static_cast<std::uint32_t>(qv));
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(m.at(static_cast<std::uint32_t>(std::get<2>(cand[i])), static_cast<std::uint32_t>(std::get<1>(cand[i]))) - di);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(UncertaintyMask, Examples) {
  std::mt19937_64 rng(1);
  const DepthMap a = random_map(20, 10, rng);
  const UncertaintyMask same = uncertainty_mask(a, a, 0.05);
  for (std::uint32_t v = 0; v < 10; ++v)
    for (std::uint32_t u = 0; u < 20; ++u) EXPECT_EQ(same.at(u, v), !a.valid(u, v));

  const DepthMap c1 = constant_map(8, 8, 1.0), c2 = constant_map(8, 8, 1.1);
  EXPECT_EQ(uncertainty_mask(c1, c2, 0.05).fraction(), 1.0);
  EXPECT_THROW(uncertainty_mask(c1, constant_map(8, 7, 1.0), 0.05), Error);
  EXPECT_THROW(uncertainty_mask(c1, c2, 0.0), Error);
}

TEST(UncertaintyMask, MatchesPixelLoopAndIsSymmetric) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const DepthMap a = random_map(16, 12, rng), b = random_map(16, 12, rng);
    const double tau = 0.05 + 0.1 * t;
    const UncertaintyMask m = uncertainty_mask(a, b, tau);
    const UncertaintyMask r = uncertainty_mask(b, a, tau);
    EXPECT_EQ(m.uncertain, r.uncertain);
    for (std::uint32_t v = 0; v < 12; ++v)
      for (std::uint32_t u = 0; u < 16; ++u) {
        const bool expect = !a.valid(u, v) || !b.valid(u, v) || std::abs(a.at(u, v) - b.at(u, v)) > tau;
        EXPECT_EQ(m.at(u, v), expect);
      }
  }
}

TEST(RefineDepth, Examples) {
  std::mt19937_64 rng(3);
  const DepthMap a = random_map(10, 10, rng, 0.0);
  const DepthMap same = refine_depth(a, a, 0.05);
  for (std::uint32_t v = 0; v < 10; ++v)
    for (std::uint32_t u = 0; u < 10; ++u) EXPECT_EQ(same.at(u, v), a.at(u, v));

  const double tau = 0.05;
  DepthMap x = constant_map(4, 4, 1.0), y = constant_map(4, 4, 1.0);
  y.set(2, 1, 1.0 + 3 * tau);
  const DepthMap mean = refine_depth(x, y, tau, RefineMode::Mean);
  EXPECT_DOUBLE_EQ(mean.at(2, 1), 1.0 + 1.5 * tau);
  EXPECT_EQ(mean.at(0, 0), 1.0);
  const DepthMap removed = refine_depth(x, y, tau, RefineMode::Remove);
  EXPECT_FALSE(removed.valid(2, 1));
  EXPECT_EQ(removed.valid_count(), 15u);
}

TEST(RefineDepth, RemoveInvalidatesExactlyTheMask) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    const DepthMap a = random_map(24, 16, rng), b = random_map(24, 16, rng);
    const double tau = 0.3;
    const UncertaintyMask m = uncertainty_mask(a, b, tau);
    const DepthMap out = refine_depth(a, b, tau);
    for (std::uint32_t v = 0; v < 16; ++v)
      for (std::uint32_t u = 0; u < 24; ++u) {
        EXPECT_EQ(!out.valid(u, v), m.at(u, v));
        if (!m.at(u, v)) {
          const double o = out.at(u, v), s = a.at(u, v);
          EXPECT_EQ(std::memcmp(&o, &s, sizeof(double)), 0);  // bitwise
        }
      }
  }
}

TEST(RefineDepth, MaskFractionMonotoneInTau) {
  std::mt19937_64 rng(5);
  const DepthMap truth = render_sphere_depth({0, 0, 1}, 0.3, default_camera());
  const DepthMap a = perturb_depth(truth, 0.02, rng), b = perturb_depth(truth, 0.02, rng);
  double prev = 2.0;
  for (int i = 1; i <= 20; ++i) {
    const double f = uncertainty_mask(a, b, 0.005 * i).fraction();
    EXPECT_LE(f, prev);
    prev = f;
  }
}

TEST(PerturbDepth, KeepsValidityAndNoiseLevel) {
  std::mt19937_64 rng(6);
  const DepthMap truth = constant_map(200, 200, 1.0);
  const DepthMap p = perturb_depth(truth, 0.01, rng);
  double s = 0, s2 = 0;
  for (std::uint32_t v = 0; v < 200; ++v)
    for (std::uint32_t u = 0; u < 200; ++u) {
      ASSERT_TRUE(p.valid(u, v));
      const double d = p.at(u, v) - 1.0;
      s += d;
      s2 += d * d;
    }
  const double n = 40000;
  EXPECT_NEAR(s / n, 0.0, 5e-4);
  EXPECT_NEAR(std::sqrt(s2 / n), 0.01, 5e-4);
}

TEST(Kfa, ConstantPlaneGivesMlpOfZero) {
  std::mt19937_64 rng(7);
  const KfaParams params = KfaParams::init(6, 10, kDefaultKfaDim, rng);
  const DepthMap plane = constant_map(30, 30, 1.3);
  const auto zero = kfa_mlp(params, std::vector<double>(6, 0.0));
  ASSERT_EQ(zero.size(), kDefaultKfaDim);
  for (std::uint32_t v = 5; v < 25; v += 3)
    for (std::uint32_t u = 5; u < 25; u += 4) EXPECT_EQ(kfa_aggregate(plane, Point2(u, v), params), zero);
}

TEST(Kfa, ZeroWeightsGiveZeroFeature) {
  std::mt19937_64 rng(8);
  KfaParams params = KfaParams::init(4, 8, 5, rng);
  params.w1.setZero();
  params.b1.setZero();
  params.w2.setZero();
  params.b2.setZero();
  const DepthMap m = random_map(20, 20, rng, 0.0);
  for (double x : kfa_aggregate(m, Point2(10, 10), params)) EXPECT_EQ(x, 0.0);
}

TEST(Kfa, GatherMatchesWindowScan) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const DepthMap m = random_map(25, 25, rng, 0.3);
    for (int q = 0; q < 20; ++q) {
      const int u = static_cast<int>(rng() % 25), v = static_cast<int>(rng() % 25);
      if (!m.valid(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v))) continue;
      std::vector<double> got;
      try {
        got = kfa_gather(m, Point2(u + 0.3, v - 0.2), 4, 3);
      } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientNeighbors);
        continue;
      }
      EXPECT_EQ(got, gather_oracle(m, u, v, 4, 3));
    }
  }
}

TEST(Kfa, ShiftInvariant) {
  std::mt19937_64 rng(10);
  const KfaParams params = KfaParams::init(5, 12, 6, rng);
  const DepthMap m = random_map(20, 20, rng, 0.0);
  DepthMap shifted(20, 20);
  for (std::uint32_t v = 0; v < 20; ++v)
    for (std::uint32_t u = 0; u < 20; ++u) shifted.set(u, v, m.at(u, v) + 0.75);
  const auto a = kfa_aggregate(m, Point2(7, 12), params);
  const auto b = kfa_aggregate(shifted, Point2(7, 12), params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Kfa, Errors) {
  std::mt19937_64 rng(11);
  DepthMap m(5, 5);
  m.set(2, 2, 1.0);
  m.set(2, 3, 1.0);
  try {
    kfa_gather(m, Point2(2, 2), 3, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientNeighbors);
  }
  try {
    kfa_gather(m, Point2(0, 0), 1, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidDepth);
  }
  KfaParams p = KfaParams::init(3, 4, 2, rng);
  p.k = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(DepthMapType, RejectsInvalidDepth) {
  DepthMap m(2, 2);
  EXPECT_THROW(m.set(0, 0, -1.0), Error);
  EXPECT_THROW(m.set(0, 0, NAN), Error);
  EXPECT_FALSE(m.valid(0, 0));
  EXPECT_TRUE(std::isnan(m.at(0, 0)));
}
