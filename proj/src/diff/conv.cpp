// conv2d as im2col + GEMM. The column buffer is rebuilt during backward
// rather than kept alive on the tape.

#include <algorithm>
#include <sstream>
#include <vector>

#include "umff/diff/ops.hpp"
#include "umff/kernels/gemm.hpp"

namespace umff::diff {

namespace {

struct ConvGeom {
  int cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int ho, wo;

  int k() const { return cin * kh * kw; }
  int p() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) read input columns inside the image for tap kx.
struct ValidRange {
  int lo, hi;
};

ValidRange valid_columns(const ConvGeom& g, int kx) {
  if (g.stride != 1) return {0, 0};
  const int lo = std::clamp(g.pad - kx, 0, g.wo);
  const int hi = std::clamp(g.w + g.pad - kx, lo, g.wo);
  return {lo, hi};
}

template <typename T>
void im2col(const ConvGeom& g, const T* x, T* col) {
  for (int ci = 0; ci < g.cin; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci * g.kh + ky) * g.kw + kx) * g.p();
        const ValidRange r = valid_columns(g, kx);
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          if (g.stride == 1) {
            std::fill(dst, dst + r.lo, T(0));
            std::copy(src + r.lo - g.pad + kx, src + r.hi - g.pad + kx, dst + r.lo);
            std::fill(dst + r.hi, dst + g.wo, T(0));
            continue;
          }
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeom& g, const T* col, T* dx) {
  for (int ci = 0; ci < g.cin; ++ci) {
    T* plane = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci * g.kh + ky) * g.kw + kx) * g.p();
        const ValidRange r = valid_columns(g, kx);
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.wo;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          if (g.stride == 1) {
            T* d = dst - g.pad + kx;
            for (int ox = r.lo; ox < r.hi; ++ox) d[ox] += src[ox];
            continue;
          }
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Per-thread scratch reused across calls. Contents are unspecified on return.
template <typename T>
T* scratch(int slot, std::size_t size) {
  thread_local std::vector<T> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b.data();
}

ConvGeom make_geom(const Shape& xs, const Shape& ws, int stride, int padding) {
  std::ostringstream err;
  if (stride <= 0) {
    err << "conv2d: stride must be positive, got " << stride;
    throw std::invalid_argument(err.str());
  }
  if (padding < 0) {
    err << "conv2d: padding must be non-negative, got " << padding;
    throw std::invalid_argument(err.str());
  }
  if (ws.c != xs.c) {
    err << "conv2d: in_channels mismatch, input has " << xs.c << " channels but weight expects "
        << ws.c;
    throw std::invalid_argument(err.str());
  }
  ConvGeom g{xs.c, xs.h, xs.w, ws.n, ws.h, ws.w, stride, padding, 0, 0};
  const int num_h = xs.h + 2 * padding - ws.h;
  const int num_w = xs.w + 2 * padding - ws.w;
  if (num_h < 0) {
    err << "conv2d: height " << xs.h << " with padding " << padding << " is smaller than kernel height "
        << ws.h;
    throw std::invalid_argument(err.str());
  }
  if (num_w < 0) {
    err << "conv2d: width " << xs.w << " with padding " << padding << " is smaller than kernel width "
        << ws.w;
    throw std::invalid_argument(err.str());
  }
  g.ho = num_h / stride + 1;
  g.wo = num_w / stride + 1;
  return g;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  const ConvGeom g = make_geom(xs, ws, stride, padding);
  if (bias.defined()) {
    const Shape bs = bias.shape();
    if (bs.n != 1 || bs.c != g.cout || bs.h != 1 || bs.w != 1) {
      std::ostringstream err;
      err << "conv2d: bias must be (1, " << g.cout << ", 1, 1), got " << bs.str();
      throw std::invalid_argument(err.str());
    }
  }

  using kernels::GemmArgs;
  using kernels::Trans;
  Tensor<T> out = Tensor<T>::zeros(Shape{xs.n, g.cout, g.ho, g.wo});
  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.cout) * g.p();
  T* col = g.pointwise() ? nullptr : scratch<T>(0, static_cast<std::size_t>(g.k()) * g.p());
  const T* wd = weight.data().data();
  for (int n = 0; n < xs.n; ++n) {
    const T* xn = input.data().data() + n * in_stride;
    T* yn = out.data().data() + n * out_stride;
    const T* b = xn;
    if (!g.pointwise()) {
      im2col(g, xn, col);
      b = col;
    }
    kernels::gemm<T>(GemmArgs{Trans::No, Trans::No, g.cout, g.p(), g.k(), g.k(), g.p(), g.p()}, T(1),
                     wd, b, T(0), yn);
    if (bias.defined()) {
      auto bd = bias.data();
      for (int co = 0; co < g.cout; ++co) {
        T* row = yn + static_cast<std::size_t>(co) * g.p();
        for (int i = 0; i < g.p(); ++i) row[i] += bd[co];
      }
    }
  }
  check_finite<T>(out.data(), "conv2d");

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  detail::record<T>(Op::conv2d, std::move(inputs), out,
                    [input, weight, bias, out, g, in_stride, out_stride]() mutable {
    auto gy = out.grad();
    const std::size_t col_size = g.pointwise() ? 0 : static_cast<std::size_t>(g.k()) * g.p();
    T* col = g.pointwise() ? nullptr : scratch<T>(0, col_size);
    T* dcol = g.pointwise() ? nullptr : scratch<T>(1, col_size);
    const bool need_x = input.requires_grad();
    const bool need_w = weight.requires_grad();
    const bool need_b = bias.defined() && bias.requires_grad();
    std::span<T> gw = need_w ? weight.ensure_grad() : std::span<T>{};
    std::span<T> gb = need_b ? bias.ensure_grad() : std::span<T>{};
    std::span<T> gx = need_x ? input.ensure_grad() : std::span<T>{};
    const T* wd = weight.data().data();
    for (int n = 0; n < input.shape().n; ++n) {
      const T* dy = gy.data() + n * out_stride;
      if (need_b) {
        for (int co = 0; co < g.cout; ++co) {
          const T* row = dy + static_cast<std::size_t>(co) * g.p();
          double acc = 0.0;
          for (int i = 0; i < g.p(); ++i) acc += row[i];
          gb[co] += static_cast<T>(acc);
        }
      }
      if (need_w) {
        const T* xn = input.data().data() + n * in_stride;
        const T* cols = xn;
        if (!g.pointwise()) {
          im2col(g, xn, col);
          cols = col;
        }
        // dW += dY * col^T
        kernels::gemm<T>(GemmArgs{Trans::No, Trans::Yes, g.cout, g.k(), g.p(), g.p(), g.p(), g.k()},
                         T(1), dy, cols, T(1), gw.data());
      }
      if (need_x) {
        T* dxn = gx.data() + n * in_stride;
        if (g.pointwise()) {
          // dX += W^T * dY
          kernels::gemm<T>(GemmArgs{Trans::Yes, Trans::No, g.k(), g.p(), g.cout, g.k(), g.p(), g.p()},
                           T(1), wd, dy, T(1), dxn);
        } else {
          kernels::gemm<T>(GemmArgs{Trans::Yes, Trans::No, g.k(), g.p(), g.cout, g.k(), g.p(), g.p()},
                           T(1), wd, dy, T(0), dcol);
          col2im_add(g, dcol, dxn);
        }
      }
    }
  });
  return out;
}

template Tensor<float> conv2d<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                     int, int);
template Tensor<double> conv2d<double>(const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, int, int);

}  // namespace umff::diff
