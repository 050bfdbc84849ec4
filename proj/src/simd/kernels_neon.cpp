// AArch64 variant. Advanced SIMD is mandatory on AArch64, so no runtime probe.
#include "dgecn/simd/kernels.hpp"

#include <arm_neon.h>

#include <algorithm>
#include <limits>

namespace dgecn::simd::detail {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, d, d);
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double min_squared_distance_soa(double px, double py, double pz, const double* xs, const double* ys,
                                const double* zs, std::size_t n) {
  const float64x2_t vx = vdupq_n_f64(px);
  const float64x2_t vy = vdupq_n_f64(py);
  const float64x2_t vz = vdupq_n_f64(pz);
  float64x2_t best = vdupq_n_f64(std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t dx = vsubq_f64(vx, vld1q_f64(xs + i));
    const float64x2_t dy = vsubq_f64(vy, vld1q_f64(ys + i));
    const float64x2_t dz = vsubq_f64(vz, vld1q_f64(zs + i));
    const float64x2_t d2 = vaddq_f64(vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy)), vmulq_f64(dz, dz));
    best = vminq_f64(best, d2);
  }
  double m = vminvq_f64(best);
  for (; i < n; ++i) {
    const double dx = px - xs[i];
    const double dy = py - ys[i];
    const double dz = pz - zs[i];
    m = std::min(m, dx * dx + dy * dy + dz * dz);
  }
  return m;
}

void matmul_nt(const double* x, const double* w, double* y, std::size_t rows, std::size_t in,
               std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) y[r * out + o] = dot(x + r * in, w + o * in, in);
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{Backend::Neon, dot, axpy, squared_distance, min_squared_distance_soa, matmul_nt};
  return &table;
}

}  // namespace dgecn::simd::detail
