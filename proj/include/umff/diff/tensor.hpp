#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace umff::diff {

/// Batch x channels x height x width. Convolution kernels reuse the same
/// record as (out_channels, in_channels, kernel_h, kernel_w).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

/// Raised when a NaN or infinity reaches an operation boundary.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shared-handle rank-4 array. Copies alias the same storage; use `clone`
/// for an independent copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::size_t numel() const { return impl().data.size(); }

  std::span<T> data() { return impl().data; }
  std::span<const T> data() const { return impl().data; }
  T item() const;
  T at(int n, int c, int h, int w) const {
    const Shape& s = shape();
    return impl().data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
  }

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool on) { impl().requires_grad = on; }

  bool has_grad() const { return !impl().grad.empty(); }
  std::span<T> grad() { return impl().grad; }
  std::span<const T> grad() const { return impl().grad; }
  // Gradient buffers are mutable through any handle, including const ones.
  /// Allocates a zero gradient buffer if none exists, returns it.
  std::span<T> ensure_grad() const;
  void zero_grad() const;
  void clear_grad() const {
    mut().grad.clear();
    mut().grad.shrink_to_fit();
  }

  /// Fresh storage, same values, no gradient.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  Impl& impl() {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }
  const Impl& impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }

  Impl& mut() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }

  std::shared_ptr<Impl> impl_;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src) {
  std::vector<To> values(src.numel());
  auto in = src.data();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<To>(in[i]);
  return Tensor<To>::from(src.shape(), std::move(values));
}

/// Stops glibc from returning freed tensor storage to the kernel between
/// training steps, so buffers are reused instead of page-faulted in again.
/// No-op on other C libraries. Call once, early, from an executable.
void retain_freed_memory();

/// Throws NonFiniteError naming `where` if any value is NaN or infinite.
template <typename T>
void check_finite(std::span<const T> values, const char* where);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace umff::diff
