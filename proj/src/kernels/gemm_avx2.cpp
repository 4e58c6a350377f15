// Packed GEMM with AVX2/FMA micro-kernels.
//
// The driver (blocking and packing) is plain C++; only the micro-kernels
// and the 8x8 transpose carry AVX2 target attributes, so no library template
// gets instantiated with AVX2 codegen in this translation unit.

#include "umff/kernels/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <type_traits>
#include <vector>

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define UMFF_HAVE_X86 1
#include <immintrin.h>
#endif

namespace umff::kernels::avx2 {

namespace {

template <typename T>
struct Blocking;

template <>
struct Blocking<float> {
  static constexpr int mr = 4;
  static constexpr int nr = 24;
  static constexpr int kc = 256;
  static constexpr int mc = 128;
  static constexpr int nc = 2064;
};

template <>
struct Blocking<double> {
  static constexpr int mr = 6;
  static constexpr int nr = 8;
  static constexpr int kc = 256;
  static constexpr int mc = 96;
  static constexpr int nc = 1024;
};

#if UMFF_HAVE_X86

// acc(4x24) = sum_p a[p*4 + r] * b[p*ldb + j];  c = alpha*acc + beta*c
__attribute__((target("avx2,fma"))) void micro_f32(int kc, const float* a, const float* b, int ldb,
                                                   float alpha, float beta, float* c, int ldc) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps(), c02 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps(), c12 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps(), c22 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps(), c32 = _mm256_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    const __m256 b2 = _mm256_loadu_ps(b + 16);
    __m256 av = _mm256_broadcast_ss(a + 0);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    c02 = _mm256_fmadd_ps(av, b2, c02);
    av = _mm256_broadcast_ss(a + 1);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    c12 = _mm256_fmadd_ps(av, b2, c12);
    av = _mm256_broadcast_ss(a + 2);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    c22 = _mm256_fmadd_ps(av, b2, c22);
    av = _mm256_broadcast_ss(a + 3);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
    c32 = _mm256_fmadd_ps(av, b2, c32);
    a += 4;
    b += ldb;
  }
  const __m256 va = _mm256_set1_ps(alpha);
  __m256 rows[4][3] = {{c00, c01, c02}, {c10, c11, c12}, {c20, c21, c22}, {c30, c31, c32}};
  if (beta == 0.0f) {
    for (int r = 0; r < 4; ++r) {
      for (int q = 0; q < 3; ++q) _mm256_storeu_ps(c + r * ldc + 8 * q, _mm256_mul_ps(va, rows[r][q]));
    }
  } else {
    const __m256 vb = _mm256_set1_ps(beta);
    for (int r = 0; r < 4; ++r) {
      for (int q = 0; q < 3; ++q) {
        float* cr = c + r * ldc + 8 * q;
        _mm256_storeu_ps(cr, _mm256_fmadd_ps(va, rows[r][q], _mm256_mul_ps(vb, _mm256_loadu_ps(cr))));
      }
    }
  }
}

__attribute__((target("avx2,fma"))) void micro_f64(int kc, const double* a, const double* b, int ldb,
                                                   double alpha, double beta, double* c, int ldc) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  __m256d c40 = _mm256_setzero_pd(), c41 = _mm256_setzero_pd();
  __m256d c50 = _mm256_setzero_pd(), c51 = _mm256_setzero_pd();
  for (int p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b);
    const __m256d b1 = _mm256_loadu_pd(b + 4);
    __m256d av = _mm256_broadcast_sd(a + 0);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + 1);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
    av = _mm256_broadcast_sd(a + 4);
    c40 = _mm256_fmadd_pd(av, b0, c40);
    c41 = _mm256_fmadd_pd(av, b1, c41);
    av = _mm256_broadcast_sd(a + 5);
    c50 = _mm256_fmadd_pd(av, b0, c50);
    c51 = _mm256_fmadd_pd(av, b1, c51);
    a += 6;
    b += ldb;
  }
  const __m256d va = _mm256_set1_pd(alpha);
  __m256d rows[6][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}, {c40, c41}, {c50, c51}};
  if (beta == 0.0) {
    for (int r = 0; r < 6; ++r) {
      _mm256_storeu_pd(c + r * ldc, _mm256_mul_pd(va, rows[r][0]));
      _mm256_storeu_pd(c + r * ldc + 4, _mm256_mul_pd(va, rows[r][1]));
    }
  } else {
    const __m256d vb = _mm256_set1_pd(beta);
    for (int r = 0; r < 6; ++r) {
      double* cr = c + r * ldc;
      _mm256_storeu_pd(cr, _mm256_fmadd_pd(va, rows[r][0], _mm256_mul_pd(vb, _mm256_loadu_pd(cr))));
      _mm256_storeu_pd(cr + 4,
                       _mm256_fmadd_pd(va, rows[r][1], _mm256_mul_pd(vb, _mm256_loadu_pd(cr + 4))));
    }
  }
}

inline void micro(int kc, const float* a, const float* b, int ldb, float alpha, float beta, float* c,
                  int ldc) {
  micro_f32(kc, a, b, ldb, alpha, beta, c, ldc);
}
inline void micro(int kc, const double* a, const double* b, int ldb, double alpha, double beta,
                  double* c, int ldc) {
  micro_f64(kc, a, b, ldb, alpha, beta, c, ldc);
}

// dst[p*24 + j] = src[j*lds + p] for an 8 x 8 block.
__attribute__((target("avx2"))) void transpose8_f32(const float* src, std::ptrdiff_t lds, float* dst) {
  __m256 r0 = _mm256_loadu_ps(src + 0 * lds), r1 = _mm256_loadu_ps(src + 1 * lds);
  __m256 r2 = _mm256_loadu_ps(src + 2 * lds), r3 = _mm256_loadu_ps(src + 3 * lds);
  __m256 r4 = _mm256_loadu_ps(src + 4 * lds), r5 = _mm256_loadu_ps(src + 5 * lds);
  __m256 r6 = _mm256_loadu_ps(src + 6 * lds), r7 = _mm256_loadu_ps(src + 7 * lds);
  const __m256 t0 = _mm256_unpacklo_ps(r0, r1), t1 = _mm256_unpackhi_ps(r0, r1);
  const __m256 t2 = _mm256_unpacklo_ps(r2, r3), t3 = _mm256_unpackhi_ps(r2, r3);
  const __m256 t4 = _mm256_unpacklo_ps(r4, r5), t5 = _mm256_unpackhi_ps(r4, r5);
  const __m256 t6 = _mm256_unpacklo_ps(r6, r7), t7 = _mm256_unpackhi_ps(r6, r7);
  const __m256 u0 = _mm256_shuffle_ps(t0, t2, 0x44), u1 = _mm256_shuffle_ps(t0, t2, 0xEE);
  const __m256 u2 = _mm256_shuffle_ps(t1, t3, 0x44), u3 = _mm256_shuffle_ps(t1, t3, 0xEE);
  const __m256 u4 = _mm256_shuffle_ps(t4, t6, 0x44), u5 = _mm256_shuffle_ps(t4, t6, 0xEE);
  const __m256 u6 = _mm256_shuffle_ps(t5, t7, 0x44), u7 = _mm256_shuffle_ps(t5, t7, 0xEE);
  _mm256_storeu_ps(dst + 0 * 24, _mm256_permute2f128_ps(u0, u4, 0x20));
  _mm256_storeu_ps(dst + 1 * 24, _mm256_permute2f128_ps(u1, u5, 0x20));
  _mm256_storeu_ps(dst + 2 * 24, _mm256_permute2f128_ps(u2, u6, 0x20));
  _mm256_storeu_ps(dst + 3 * 24, _mm256_permute2f128_ps(u3, u7, 0x20));
  _mm256_storeu_ps(dst + 4 * 24, _mm256_permute2f128_ps(u0, u4, 0x31));
  _mm256_storeu_ps(dst + 5 * 24, _mm256_permute2f128_ps(u1, u5, 0x31));
  _mm256_storeu_ps(dst + 6 * 24, _mm256_permute2f128_ps(u2, u6, 0x31));
  _mm256_storeu_ps(dst + 7 * 24, _mm256_permute2f128_ps(u3, u7, 0x31));
}

// Full-width transposed panel: dst[p*nr + j] = src[j*lds + p].
template <typename T>
void pack_b_panel_t(const T* src, std::ptrdiff_t lds, int kc, T* dst) {
  constexpr int nr = Blocking<T>::nr;
  int p = 0;
  if constexpr (std::is_same_v<T, float>) {
    for (; p + 8 <= kc; p += 8) {
      for (int j = 0; j < nr; j += 8) transpose8_f32(src + j * lds + p, lds, dst + p * nr + j);
    }
  }
  for (; p < kc; ++p) {
    for (int j = 0; j < nr; ++j) dst[p * nr + j] = src[j * lds + p];
  }
}

#endif  // UMFF_HAVE_X86

template <typename T>
inline T elem_a(const GemmArgs& g, const T* a, int i, int p) {
  return g.trans_a == Trans::No ? a[static_cast<std::ptrdiff_t>(i) * g.lda + p]
                                : a[static_cast<std::ptrdiff_t>(p) * g.lda + i];
}

template <typename T>
inline T elem_b(const GemmArgs& g, const T* b, int p, int j) {
  return g.trans_b == Trans::No ? b[static_cast<std::ptrdiff_t>(p) * g.ldb + j]
                                : b[static_cast<std::ptrdiff_t>(j) * g.ldb + p];
}

// Panels of MR rows, each laid out p-major: panel[p*MR + r].
template <typename T>
void pack_a(const GemmArgs& g, const T* a, int ic, int mc, int pc, int kc, T* dst) {
  constexpr int mr = Blocking<T>::mr;
  for (int ir = 0; ir < mc; ir += mr) {
    const int rows = std::min(mr, mc - ir);
    for (int p = 0; p < kc; ++p) {
      int r = 0;
      for (; r < rows; ++r) dst[p * mr + r] = elem_a(g, a, ic + ir + r, pc + p);
      for (; r < mr; ++r) dst[p * mr + r] = T(0);
    }
    dst += static_cast<std::ptrdiff_t>(mr) * kc;
  }
}

// Panels of NR columns, each laid out p-major: panel[p*NR + j].
template <typename T>
void pack_b(const GemmArgs& g, const T* b, int pc, int kc, int jc, int nc, T* dst) {
  constexpr int nr = Blocking<T>::nr;
  for (int jr = 0; jr < nc; jr += nr) {
    const int cols = std::min(nr, nc - jr);
    if (g.trans_b == Trans::No && cols == nr) {
      for (int p = 0; p < kc; ++p) {
        std::memcpy(dst + p * nr, b + static_cast<std::ptrdiff_t>(pc + p) * g.ldb + jc + jr,
                    sizeof(T) * nr);
      }
#if UMFF_HAVE_X86
    } else if (g.trans_b == Trans::Yes && cols == nr) {
      pack_b_panel_t(b + static_cast<std::ptrdiff_t>(jc + jr) * g.ldb + pc, g.ldb, kc, dst);
#endif
    } else if (g.trans_b == Trans::Yes) {
      for (int j = 0; j < cols; ++j) {
        const T* src = b + static_cast<std::ptrdiff_t>(jc + jr + j) * g.ldb + pc;
        for (int p = 0; p < kc; ++p) dst[p * nr + j] = src[p];
      }
      for (int j = cols; j < nr; ++j) {
        for (int p = 0; p < kc; ++p) dst[p * nr + j] = T(0);
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        int j = 0;
        for (; j < cols; ++j) dst[p * nr + j] = elem_b(g, b, pc + p, jc + jr + j);
        for (; j < nr; ++j) dst[p * nr + j] = T(0);
      }
    }
    dst += static_cast<std::ptrdiff_t>(nr) * kc;
  }
}

template <typename T>
void scale_only(const GemmArgs& g, T beta, T* c) {
  for (int i = 0; i < g.m; ++i) {
    T* row = c + static_cast<std::ptrdiff_t>(i) * g.ldc;
    for (int j = 0; j < g.n; ++j) row[j] = beta == T(0) ? T(0) : row[j] * beta;
  }
}

}  // namespace

template <typename T>
void gemm(const GemmArgs& g, T alpha, const T* a, const T* b, T beta, T* c) {
#if UMFF_HAVE_X86
  using B = Blocking<T>;
  if (g.m == 0 || g.n == 0) return;
  if (g.k == 0 || alpha == T(0)) {
    scale_only(g, beta, c);
    return;
  }

  thread_local std::vector<T> apack;
  thread_local std::vector<T> bpack;
  apack.resize(static_cast<std::size_t>(B::mc) * B::kc);
  bpack.resize(static_cast<std::size_t>(B::nc + B::nr) * B::kc);
  T tile[B::mr * B::nr];

  // With a single row block, full-width strips of an untransposed B are
  // read in place instead of being copied into bpack.
  const bool direct_b = g.trans_b == Trans::No && g.m <= B::mc;

  for (int jc = 0; jc < g.n; jc += B::nc) {
    const int nc = std::min(B::nc, g.n - jc);
    for (int pc = 0; pc < g.k; pc += B::kc) {
      const int kc = std::min(B::kc, g.k - pc);
      const T beta_eff = pc == 0 ? beta : T(1);
      if (!direct_b) pack_b(g, b, pc, kc, jc, nc, bpack.data());
      for (int ic = 0; ic < g.m; ic += B::mc) {
        const int mc = std::min(B::mc, g.m - ic);
        pack_a(g, a, ic, mc, pc, kc, apack.data());
        for (int jr = 0; jr < nc; jr += B::nr) {
          const int cols = std::min(B::nr, nc - jr);
          const T* bp = bpack.data() + static_cast<std::ptrdiff_t>(jr / B::nr) * B::nr * kc;
          int ldb = B::nr;
          if (direct_b && cols == B::nr) {
            bp = b + static_cast<std::ptrdiff_t>(pc) * g.ldb + jc + jr;
            ldb = g.ldb;
          } else if (direct_b) {
            pack_b(g, b, pc, kc, jc + jr, cols, bpack.data());
            bp = bpack.data();
          }
          for (int ir = 0; ir < mc; ir += B::mr) {
            const int rows = std::min(B::mr, mc - ir);
            const T* ap = apack.data() + static_cast<std::ptrdiff_t>(ir / B::mr) * B::mr * kc;
            T* cp = c + static_cast<std::ptrdiff_t>(ic + ir) * g.ldc + jc + jr;
            if (rows == B::mr && cols == B::nr) {
              micro(kc, ap, bp, ldb, alpha, beta_eff, cp, g.ldc);
            } else {
              for (int r = 0; r < B::mr; ++r) {
                for (int j = 0; j < B::nr; ++j) {
                  tile[r * B::nr + j] =
                      (r < rows && j < cols) ? cp[static_cast<std::ptrdiff_t>(r) * g.ldc + j] : T(0);
                }
              }
              micro(kc, ap, bp, ldb, alpha, beta_eff, tile, B::nr);
              for (int r = 0; r < rows; ++r) {
                for (int j = 0; j < cols; ++j) {
                  cp[static_cast<std::ptrdiff_t>(r) * g.ldc + j] = tile[r * B::nr + j];
                }
              }
            }
          }
        }
      }
    }
  }
#else
  scalar::gemm(g, alpha, a, b, beta, c);
#endif
}

template void gemm<float>(const GemmArgs&, float, const float*, const float*, float, float*);
template void gemm<double>(const GemmArgs&, double, const double*, const double*, double, double*);

}  // namespace umff::kernels::avx2
