#include "umff/diff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace umff::diff {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

template <typename T>
void check_finite(std::span<const T> values, const char* where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << where << ": non-finite value " << values[i] << " at flat index " << i;
      throw NonFiniteError(os.str());
    }
  }
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return filled(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value, bool requires_grad) {
  if (shape.n <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0) {
    throw std::invalid_argument("tensor shape must be positive, got " + shape.str());
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = shape;
  t.impl_->data.assign(shape.numel(), value);
  t.impl_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape.n <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0) {
    throw std::invalid_argument("tensor shape must be positive, got " + shape.str());
  }
  if (values.size() != shape.numel()) {
    std::ostringstream os;
    os << "tensor data length " << values.size() << " does not match shape " << shape.str();
    throw std::invalid_argument(os.str());
  }
  check_finite<T>(values, "Tensor::from");
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = shape;
  t.impl_->data = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from(Shape{1, 1, 1, 1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape().str());
  return impl().data[0];
}

template <typename T>
std::span<T> Tensor<T>::ensure_grad() const {
  Impl& im = mut();
  if (im.grad.size() != im.data.size()) im.grad.assign(im.data.size(), T(0));
  return im.grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  Impl& im = mut();
  std::fill(im.grad.begin(), im.grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = impl().shape;
  t.impl_->data = impl().data;
  return t;
}

void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);

}  // namespace umff::diff
