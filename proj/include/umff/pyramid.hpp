#pragma once

#include <array>

#include "umff/diff/ops.hpp"

namespace umff {

/// Images at scales 1, 1/2 and 1/4.
template <typename T>
using Pyramid = std::array<diff::Tensor<T>, 3>;

/// Builds a pyramid by two rounds of 2x2 average pooling.
template <typename T>
Pyramid<T> make_pyramid(const diff::Tensor<T>& image) {
  Pyramid<T> p;
  p[0] = image;
  p[1] = diff::downsample_avg2(p[0]);
  p[2] = diff::downsample_avg2(p[1]);
  return p;
}

}  // namespace umff
