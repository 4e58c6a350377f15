#pragma once

// Row-major GEMM, C = alpha * op(A) * op(B) + beta * C.
//
// Two implementations exist behind one entry point: a scalar reference
// kernel and a packed AVX2/FMA kernel. The dispatching `gemm` picks the
// AVX2 path when the CPU supports it, unless the process was started with
// UMFF_SIMD=scalar or `set_isa` overrides the choice.

#include <cstddef>
#include <string_view>

namespace umff::kernels {

enum class Trans { No, Yes };

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// True when the running CPU has AVX2 and FMA.
bool cpu_has_avx2();

/// The ISA used by `gemm`. Resolved once on first use.
Isa active_isa();

/// Overrides the ISA used by `gemm`. Requesting Avx2 on a CPU without it
/// throws std::runtime_error.
void set_isa(Isa isa);

/// Dimensions follow the BLAS convention: op(A) is m x k, op(B) is k x n,
/// C is m x n. `lda`, `ldb`, `ldc` are the row strides of the stored
/// (untransposed) matrices.
struct GemmArgs {
  Trans trans_a = Trans::No;
  Trans trans_b = Trans::No;
  int m = 0;
  int n = 0;
  int k = 0;
  int lda = 0;
  int ldb = 0;
  int ldc = 0;
};

template <typename T>
void gemm(const GemmArgs& args, T alpha, const T* a, const T* b, T beta, T* c);

namespace scalar {
template <typename T>
void gemm(const GemmArgs& args, T alpha, const T* a, const T* b, T beta, T* c);
}  // namespace scalar

namespace avx2 {
// Callers must check cpu_has_avx2() first.
template <typename T>
void gemm(const GemmArgs& args, T alpha, const T* a, const T* b, T beta, T* c);
}  // namespace avx2

}  // namespace umff::kernels
