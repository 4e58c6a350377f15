#include "umff/kernels/gemm.hpp"

#include <vector>

namespace umff::kernels::scalar {

namespace {

template <typename T>
void scale_c(const GemmArgs& g, T beta, T* c) {
  for (int i = 0; i < g.m; ++i) {
    T* row = c + static_cast<std::ptrdiff_t>(i) * g.ldc;
    if (beta == T(0)) {
      for (int j = 0; j < g.n; ++j) row[j] = T(0);
    } else if (beta != T(1)) {
      for (int j = 0; j < g.n; ++j) row[j] *= beta;
    }
  }
}

}  // namespace

template <typename T>
void gemm(const GemmArgs& g, T alpha, const T* a, const T* b, T beta, T* c) {
  scale_c(g, beta, c);
  if (g.m == 0 || g.n == 0 || g.k == 0 || alpha == T(0)) return;

  // op(B) row p as a contiguous run when B is not transposed; otherwise
  // gather it once per p.
  std::vector<T> brow(g.trans_b == Trans::No ? 0 : static_cast<std::size_t>(g.n));
  for (int p = 0; p < g.k; ++p) {
    const T* bp;
    if (g.trans_b == Trans::No) {
      bp = b + static_cast<std::ptrdiff_t>(p) * g.ldb;
    } else {
      for (int j = 0; j < g.n; ++j) brow[j] = b[static_cast<std::ptrdiff_t>(j) * g.ldb + p];
      bp = brow.data();
    }
    for (int i = 0; i < g.m; ++i) {
      const T aip = g.trans_a == Trans::No ? a[static_cast<std::ptrdiff_t>(i) * g.lda + p]
                                           : a[static_cast<std::ptrdiff_t>(p) * g.lda + i];
      const T s = alpha * aip;
      if (s == T(0)) continue;
      T* ci = c + static_cast<std::ptrdiff_t>(i) * g.ldc;
      for (int j = 0; j < g.n; ++j) ci[j] += s * bp[j];
    }
  }
}

template void gemm<float>(const GemmArgs&, float, const float*, const float*, float, float*);
template void gemm<double>(const GemmArgs&, double, const double*, const double*, double, double*);

}  // namespace umff::kernels::scalar
