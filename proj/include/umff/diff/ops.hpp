#pragma once

// Differentiable operators on rank-4 tensors. Each records itself on the
// active tape (see tape.hpp) when some input requires grad.

#include <vector>

#include "umff/diff/tape.hpp"
#include "umff/diff/tensor.hpp"

namespace umff::diff {

/// Cross-correlation. `weight` is (out_ch, in_ch, kh, kw); `bias` is
/// (1, out_ch, 1, 1) or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Binary elementwise ops broadcast any dimension of size 1 against the
// other operand's size along that dimension.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);

/// Mean over each spatial plane; result is (n, c, 1, 1).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

/// 2x2 mean pooling; H and W must be even.
template <typename T>
Tensor<T> downsample_avg2(const Tensor<T>& x);

/// Factor-2 bilinear upsampling on half-pixel centres. Border samples are
/// linearly extrapolated from the two nearest source samples, so affine
/// images are reproduced exactly.
template <typename T>
Tensor<T> upsample_bilinear2(const Tensor<T>& x);

/// Unnormalised forward 2-D DFT of every plane. The result is
/// (n, 2c, h, w): channel 2k holds the real part of input channel k,
/// channel 2k+1 the imaginary part. H and W must be powers of two.
template <typename T>
Tensor<T> fft2(const Tensor<T>& x);

/// Elementwise |x|; subgradient 0 at 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// ln(1 + e^x), overflow-safe.
template <typename T>
Tensor<T> softplus(const Tensor<T>& x);

/// Elementwise ln Gamma(x), x > 0; gradient is digamma.
template <typename T>
Tensor<T> log_gamma(const Tensor<T>& x);

}  // namespace umff::diff
