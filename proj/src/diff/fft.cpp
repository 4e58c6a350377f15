#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "umff/diff/ops.hpp"

namespace umff::diff {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

int next_pow2(int v) {
  int p = 1;
  while (p < v) p <<= 1;
  return p;
}

// In-place iterative radix-2 transform of `len` samples spaced `stride`
// apart. Twiddles are evaluated in double.
template <typename T>
void fft1d(std::complex<T>* data, int len, std::size_t stride, std::vector<std::complex<T>>& scratch) {
  scratch.resize(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) scratch[i] = data[i * stride];
  for (int i = 1, j = 0; i < len; ++i) {
    int bit = len >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(scratch[i], scratch[j]);
  }
  for (int span = 2; span <= len; span <<= 1) {
    const double angle = -2.0 * std::numbers::pi / span;
    const int half = span / 2;
    for (int k = 0; k < half; ++k) {
      const std::complex<T> tw(static_cast<T>(std::cos(angle * k)), static_cast<T>(std::sin(angle * k)));
      for (int start = 0; start < len; start += span) {
        const std::complex<T> u = scratch[start + k];
        const std::complex<T> v = scratch[start + k + half] * tw;
        scratch[start + k] = u + v;
        scratch[start + k + half] = u - v;
      }
    }
  }
  for (int i = 0; i < len; ++i) data[i * stride] = scratch[i];
}

template <typename T>
void fft_plane(std::vector<std::complex<T>>& buf, int h, int w, std::vector<std::complex<T>>& scratch) {
  for (int y = 0; y < h; ++y) fft1d(buf.data() + static_cast<std::size_t>(y) * w, w, 1, scratch);
  for (int x = 0; x < w; ++x) fft1d(buf.data() + x, h, static_cast<std::size_t>(w), scratch);
}

}  // namespace

template <typename T>
Tensor<T> fft2(const Tensor<T>& x) {
  const Shape s = x.shape();
  for (auto [dim, name] : {std::pair{s.h, "height"}, std::pair{s.w, "width"}}) {
    if (!is_pow2(dim)) {
      std::ostringstream os;
      os << "fft2: " << name << ' ' << dim << " is not a power of two; pad to " << next_pow2(dim);
      throw std::invalid_argument(os.str());
    }
  }
  const Shape so{s.n, 2 * s.c, s.h, s.w};
  Tensor<T> out = Tensor<T>::zeros(so);
  const std::size_t plane = s.plane();
  std::vector<std::complex<T>> buf(plane);
  std::vector<std::complex<T>> scratch;
  auto xd = x.data();
  auto od = out.data();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xd.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) buf[i] = std::complex<T>(src[i], T(0));
    fft_plane(buf, s.h, s.w, scratch);
    T* re = od.data() + (2 * p) * plane;
    T* im = re + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      re[i] = buf[i].real();
      im[i] = buf[i].imag();
    }
  }
  check_finite<T>(out.data(), "fft2");
  // dL/dx = Re( sum_k g_k e^{+i theta} ) = Re( FFT(conj g) ) with g = gRe + i gIm.
  detail::record<T>(Op::fft2, {x}, out, [x, out, s, plane, planes]() mutable {
    auto g = out.grad();
    auto gx = x.ensure_grad();
    std::vector<std::complex<T>> buf(plane);
    std::vector<std::complex<T>> scratch;
    for (std::size_t p = 0; p < planes; ++p) {
      const T* gre = g.data() + (2 * p) * plane;
      const T* gim = gre + plane;
      for (std::size_t i = 0; i < plane; ++i) buf[i] = std::complex<T>(gre[i], -gim[i]);
      fft_plane(buf, s.h, s.w, scratch);
      T* dst = gx.data() + p * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += buf[i].real();
    }
  });
  return out;
}

template Tensor<float> fft2<float>(const Tensor<float>&);
template Tensor<double> fft2<double>(const Tensor<double>&);

}  // namespace umff::diff
