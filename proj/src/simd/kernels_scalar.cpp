#include "dgecn/simd/kernels.hpp"

#include <algorithm>
#include <limits>

namespace dgecn::simd::detail {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double min_squared_distance_soa(double px, double py, double pz, const double* xs, const double* ys,
                                const double* zs, std::size_t n) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = px - xs[i];
    const double dy = py - ys[i];
    const double dz = pz - zs[i];
    best = std::min(best, dx * dx + dy * dy + dz * dz);
  }
  return best;
}

void matmul_nt(const double* x, const double* w, double* y, std::size_t rows, std::size_t in,
               std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) y[r * out + o] = dot(x + r * in, w + o * in, in);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Backend::Scalar, dot, axpy, squared_distance, min_squared_distance_soa, matmul_nt};
  return table;
}

}  // namespace dgecn::simd::detail
