#pragma once

// Data-parallel inner loops shared by the metrics, the k-NN/FPS searches and
// the edge-convolution network. Each backend provides the same table; the
// scalar one is the reference every other backend is tested against.

#include <cstddef>
#include <string_view>
#include <vector>

namespace dgecn::simd {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // min_i |(px,py,pz) - (xs[i],ys[i],zs[i])|^2 over a structure-of-arrays cloud; n >= 1
  double (*min_squared_distance_soa)(double px, double py, double pz, const double* xs, const double* ys,
                                     const double* zs, std::size_t n);
  // y[r x out] = x[r x in] * w[out x in]^T, all row-major
  void (*matmul_nt)(const double* x, const double* w, double* y, std::size_t rows, std::size_t in,
                    std::size_t out);
};

std::string_view name(Backend b);
bool available(Backend b);
std::vector<Backend> available_backends();

// Table of the active backend. Chosen once at startup from CPU features,
// overridable with DGECN_SIMD=scalar|avx2|neon or set_backend().
const KernelTable& kernels();
// Throws std::invalid_argument when the backend is not available on this CPU/build.
const KernelTable& kernels(Backend b);
Backend active_backend();
void set_backend(Backend b);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();
}  // namespace detail

}  // namespace dgecn::simd
