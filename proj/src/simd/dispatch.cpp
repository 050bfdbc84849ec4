#include "dgecn/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace dgecn::simd {

namespace detail {
#if !defined(DGECN_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !defined(DGECN_HAVE_NEON)
const KernelTable* neon_table() { return nullptr; }
#endif
}  // namespace detail

namespace {

bool cpu_has_avx2() {
#if defined(DGECN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::Scalar: return &detail::scalar_table();
    case Backend::Avx2: return cpu_has_avx2() ? detail::avx2_table() : nullptr;
    case Backend::Neon: return detail::neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("DGECN_SIMD")) {
    const std::string v(env);
    for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon})
      if (v == name(b)) {
        if (const KernelTable* t = table_for(b)) return t;
      }
  }
  for (Backend b : {Backend::Avx2, Backend::Neon})
    if (const KernelTable* t = table_for(b)) return t;
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

std::string_view name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

bool available(Backend b) { return table_for(b) != nullptr; }

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon})
    if (available(b)) out.push_back(b);
  return out;
}

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

const KernelTable& kernels(Backend b) {
  const KernelTable* t = table_for(b);
  if (!t) throw std::invalid_argument("SIMD backend not available: " + std::string(name(b)));
  return *t;
}

Backend active_backend() { return kernels().backend; }

void set_backend(Backend b) { active().store(&kernels(b), std::memory_order_release); }

}  // namespace dgecn::simd
