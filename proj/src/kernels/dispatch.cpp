#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "umff/kernels/gemm.hpp"

namespace umff::kernels {

namespace {

Isa resolve_default() {
  if (const char* env = std::getenv("UMFF_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::Scalar;
  }
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<int>& isa_slot() {
  static std::atomic<int> slot{static_cast<int>(resolve_default())};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool cpu_has_avx2() {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
  static const bool has = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return has;
#else
  return false;
#endif
}

Isa active_isa() { return static_cast<Isa>(isa_slot().load(std::memory_order_relaxed)); }

void set_isa(Isa isa) {
  if (isa == Isa::Avx2 && !cpu_has_avx2()) {
    throw std::runtime_error("set_isa: CPU lacks AVX2/FMA");
  }
  isa_slot().store(static_cast<int>(isa), std::memory_order_relaxed);
}

template <typename T>
void gemm(const GemmArgs& args, T alpha, const T* a, const T* b, T beta, T* c) {
  if (active_isa() == Isa::Avx2) {
    avx2::gemm(args, alpha, a, b, beta, c);
  } else {
    scalar::gemm(args, alpha, a, b, beta, c);
  }
}

template void gemm<float>(const GemmArgs&, float, const float*, const float*, float, float*);
template void gemm<double>(const GemmArgs&, double, const double*, const double*, double, double*);

}  // namespace umff::kernels
