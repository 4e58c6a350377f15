#include <array>
#include <cmath>
#include <sstream>

#include "umff/diff/ops.hpp"
#include "umff/diff/special.hpp"

namespace umff::diff {

namespace {

std::string shape_pair(const Shape& a, const Shape& b) { return a.str() + " vs " + b.str(); }

struct Broadcast {
  Shape out;
  std::array<std::size_t, 4> sa{};
  std::array<std::size_t, 4> sb{};
  bool same = false;
};

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::array<int, 4> da{a.n, a.c, a.h, a.w};
  const std::array<int, 4> db{b.n, b.c, b.h, b.w};
  static constexpr std::array<const char*, 4> kDimNames{"batch", "channel", "height", "width"};
  std::array<int, 4> dout{};
  for (int d = 0; d < 4; ++d) {
    if (da[d] == db[d] || db[d] == 1 || da[d] == 1) {
      dout[d] = std::max(da[d], db[d]);
    } else {
      std::ostringstream os;
      os << op << ": cannot broadcast " << kDimNames[d] << " dimension "
         << shape_pair(a, b);
      throw std::invalid_argument(os.str());
    }
  }
  Broadcast bc;
  bc.out = Shape{dout[0], dout[1], dout[2], dout[3]};
  bc.same = a == b;
  auto strides = [&](const std::array<int, 4>& dims) {
    std::array<std::size_t, 4> s{};
    std::size_t acc = 1;
    for (int d = 3; d >= 0; --d) {
      s[d] = (dims[d] == 1 && dout[d] != 1) ? 0 : acc;
      acc *= static_cast<std::size_t>(dims[d]);
    }
    return s;
  };
  bc.sa = strides(da);
  bc.sb = strides(db);
  return bc;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const Shape& s = bc.out;
  if (bc.same) {
    const std::size_t total = s.numel();
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int h = 0; h < s.h; ++h) {
        const std::size_t base_a = n * bc.sa[0] + c * bc.sa[1] + h * bc.sa[2];
        const std::size_t base_b = n * bc.sb[0] + c * bc.sb[1] + h * bc.sb[2];
        for (int w = 0; w < s.w; ++w, ++o) f(o, base_a + w * bc.sa[3], base_b + w * bc.sb[3]);
      }
    }
  }
}

template <typename T>
Tensor<T> finish(Tensor<T> out, const char* op) {
  check_finite<T>(out.data(), op);
  return out;
}

enum class BinaryKind { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind) {
  const char* name = kind == BinaryKind::Add ? "add" : kind == BinaryKind::Sub ? "sub" : "mul";
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), name);
  Tensor<T> out = Tensor<T>::zeros(bc.out);
  auto od = out.data();
  auto ad = a.data();
  auto bd = b.data();
  switch (kind) {
    case BinaryKind::Add:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { od[o] = ad[ia] + bd[ib]; });
      break;
    case BinaryKind::Sub:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { od[o] = ad[ia] - bd[ib]; });
      break;
    case BinaryKind::Mul:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { od[o] = ad[ia] * bd[ib]; });
      break;
  }
  finish(out, name);
  const Op op = kind == BinaryKind::Add ? Op::add : kind == BinaryKind::Sub ? Op::sub : Op::mul;
  detail::record<T>(op, {a, b}, out, [a, b, out, bc, kind]() mutable {
    auto g = out.grad();
    const bool need_a = a.requires_grad();
    const bool need_b = b.requires_grad();
    std::span<T> ga = need_a ? a.ensure_grad() : std::span<T>{};
    std::span<T> gb = need_b ? b.ensure_grad() : std::span<T>{};
    auto ad = a.data();
    auto bd = b.data();
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      const T go = g[o];
      switch (kind) {
        case BinaryKind::Add:
          if (need_a) ga[ia] += go;
          if (need_b) gb[ib] += go;
          break;
        case BinaryKind::Sub:
          if (need_a) ga[ia] += go;
          if (need_b) gb[ib] -= go;
          break;
        case BinaryKind::Mul:
          if (need_a) ga[ia] += go * bd[ib];
          if (need_b) gb[ib] += go * ad[ia];
          break;
      }
    });
  });
  return out;
}

// Unary elementwise op with derivative expressed through input and output.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Op op, const char* name, Fwd fwd, Deriv deriv) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
  finish(out, name);
  detail::record<T>(op, {x}, out, [x, out, deriv]() mutable {
    auto g = out.grad();
    auto gx = x.ensure_grad();
    auto xd = x.data();
    auto od = out.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xd[i], od[i]);
  });
  return out;
}

struct Lerp {
  int i0, i1;
  double w0, w1;
};

// Source taps for factor-2 upsampling of a length-`len` axis.
std::vector<Lerp> upsample_taps(int len) {
  std::vector<Lerp> taps(static_cast<std::size_t>(2 * len));
  for (int j = 0; j < len; ++j) {
    if (len == 1) {
      taps[2 * j] = {0, 0, 1.0, 0.0};
      taps[2 * j + 1] = {0, 0, 1.0, 0.0};
      continue;
    }
    taps[2 * j] = j > 0 ? Lerp{j, j - 1, 0.75, 0.25} : Lerp{0, 1, 1.25, -0.25};
    taps[2 * j + 1] = j + 1 < len ? Lerp{j, j + 1, 0.75, 0.25}
                                  : Lerp{len - 1, len - 2, 1.25, -0.25};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, Op::relu, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Add);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Sub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Mul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, Op::scale, "scale", [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary(
      x, Op::add_scalar, "add_scalar", [offset](T v) { return v + offset; },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, Op::abs, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(
      x, Op::softplus, "softplus", [](T v) { return static_cast<T>(diff::softplus(v)); },
      [](T v, T) { return static_cast<T>(sigmoid(v)); });
}

template <typename T>
Tensor<T> log_gamma(const Tensor<T>& x) {
  return unary(
      x, Op::log_gamma, "log_gamma", [](T v) { return static_cast<T>(diff::log_gamma(v)); },
      [](T v, T) { return static_cast<T>(digamma(v)); });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t p = 0; p < od.size(); ++p) {
    double acc = 0.0;
    const T* src = xd.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    od[p] = static_cast<T>(acc / static_cast<double>(plane));
  }
  finish(out, "global_avg_pool");
  detail::record<T>(Op::global_avg_pool, {x}, out, [x, out, plane]() mutable {
    auto g = out.grad();
    auto gx = x.ensure_grad();
    const T inv = T(1) / static_cast<T>(plane);
    for (std::size_t p = 0; p < g.size(); ++p) {
      const T v = g[p] * inv;
      T* dst = gx.data() + p * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += v;
    }
  });
  return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape first = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw std::invalid_argument("concat_channels: batch/spatial mismatch " +
                                  shape_pair(first, s));
    }
    channels += s.c;
  }
  Tensor<T> out = Tensor<T>::zeros(Shape{first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  auto od = out.data();
  for (int n = 0; n < first.n; ++n) {
    std::size_t dst = static_cast<std::size_t>(n) * channels * plane;
    for (const auto& p : parts) {
      const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
      const T* src = p.data().data() + static_cast<std::size_t>(n) * len;
      std::copy(src, src + len, od.data() + dst);
      dst += len;
    }
  }
  detail::record<T>(Op::concat_channels, parts, out, [parts, out, plane, channels]() mutable {
    auto g = out.grad();
    const int batch = out.shape().n;
    for (int n = 0; n < batch; ++n) {
      std::size_t off = static_cast<std::size_t>(n) * channels * plane;
      for (auto& p : parts) {
        const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
        if (p.requires_grad()) {
          auto gp = p.ensure_grad();
          T* dst = gp.data() + static_cast<std::size_t>(n) * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += g[off + i];
        }
        off += len;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> downsample_avg2(const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("downsample_avg2: height and width must be even, got " + s.str());
  }
  const Shape so{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<T> out = Tensor<T>::zeros(so);
  auto xd = x.data();
  auto od = out.data();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xd.data() + p * s.plane();
    T* dst = od.data() + p * so.plane();
    for (int y = 0; y < so.h; ++y) {
      const T* r0 = src + static_cast<std::size_t>(2 * y) * s.w;
      const T* r1 = r0 + s.w;
      for (int xo = 0; xo < so.w; ++xo) {
        dst[y * so.w + xo] = T(0.25) * (r0[2 * xo] + r0[2 * xo + 1] + r1[2 * xo] + r1[2 * xo + 1]);
      }
    }
  }
  finish(out, "downsample_avg2");
  detail::record<T>(Op::downsample_avg2, {x}, out, [x, out, s, so, planes]() mutable {
    auto g = out.grad();
    auto gx = x.ensure_grad();
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = g.data() + p * so.plane();
      T* dst = gx.data() + p * s.plane();
      for (int y = 0; y < so.h; ++y) {
        T* r0 = dst + static_cast<std::size_t>(2 * y) * s.w;
        T* r1 = r0 + s.w;
        for (int xo = 0; xo < so.w; ++xo) {
          const T v = T(0.25) * src[y * so.w + xo];
          r0[2 * xo] += v;
          r0[2 * xo + 1] += v;
          r1[2 * xo] += v;
          r1[2 * xo + 1] += v;
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> upsample_bilinear2(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape so{s.n, s.c, s.h * 2, s.w * 2};
  const auto ty = upsample_taps(s.h);
  const auto tx = upsample_taps(s.w);
  Tensor<T> out = Tensor<T>::zeros(so);
  auto xd = x.data();
  auto od = out.data();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xd.data() + p * s.plane();
    T* dst = od.data() + p * so.plane();
    for (int y = 0; y < so.h; ++y) {
      const Lerp& ly = ty[y];
      const T* r0 = src + static_cast<std::size_t>(ly.i0) * s.w;
      const T* r1 = src + static_cast<std::size_t>(ly.i1) * s.w;
      for (int xo = 0; xo < so.w; ++xo) {
        const Lerp& lx = tx[xo];
        const double v = ly.w0 * (lx.w0 * r0[lx.i0] + lx.w1 * r0[lx.i1]) +
                         ly.w1 * (lx.w0 * r1[lx.i0] + lx.w1 * r1[lx.i1]);
        dst[static_cast<std::size_t>(y) * so.w + xo] = static_cast<T>(v);
      }
    }
  }
  finish(out, "upsample_bilinear2");
  detail::record<T>(Op::upsample_bilinear2, {x}, out, [x, out, s, so, ty, tx, planes]() mutable {
    auto g = out.grad();
    auto gx = x.ensure_grad();
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = g.data() + p * so.plane();
      T* dst = gx.data() + p * s.plane();
      for (int y = 0; y < so.h; ++y) {
        const Lerp& ly = ty[y];
        T* r0 = dst + static_cast<std::size_t>(ly.i0) * s.w;
        T* r1 = dst + static_cast<std::size_t>(ly.i1) * s.w;
        for (int xo = 0; xo < so.w; ++xo) {
          const Lerp& lx = tx[xo];
          const double go = src[static_cast<std::size_t>(y) * so.w + xo];
          r0[lx.i0] += static_cast<T>(ly.w0 * lx.w0 * go);
          r0[lx.i1] += static_cast<T>(ly.w0 * lx.w1 * go);
          r1[lx.i0] += static_cast<T>(ly.w1 * lx.w0 * go);
          r1[lx.i1] += static_cast<T>(ly.w1 * lx.w1 * go);
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  finish(out, "sum");
  detail::record<T>(Op::sum, {x}, out, [x, out]() mutable {
    const T g = out.grad()[0];
    for (T& v : x.ensure_grad()) v += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  const double count = static_cast<double>(x.numel());
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / count));
  finish(out, "mean");
  detail::record<T>(Op::mean, {x}, out, [x, out, count]() mutable {
    const T g = static_cast<T>(out.grad()[0] / count);
    for (T& v : x.ensure_grad()) v += g;
  });
  return out;
}

#define UMFF_INSTANTIATE_OPS(T)                                                   \
  template Tensor<T> relu<T>(const Tensor<T>&);                                 \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                             \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                        \
  template Tensor<T> abs<T>(const Tensor<T>&);                                  \
  template Tensor<T> softplus<T>(const Tensor<T>&);                             \
  template Tensor<T> log_gamma<T>(const Tensor<T>&);                            \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                      \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);          \
  template Tensor<T> downsample_avg2<T>(const Tensor<T>&);                      \
  template Tensor<T> upsample_bilinear2<T>(const Tensor<T>&);                   \
  template Tensor<T> sum<T>(const Tensor<T>&);                                  \
  template Tensor<T> mean<T>(const Tensor<T>&);

UMFF_INSTANTIATE_OPS(float)
UMFF_INSTANTIATE_OPS(double)

#undef UMFF_INSTANTIATE_OPS

}  // namespace umff::diff
