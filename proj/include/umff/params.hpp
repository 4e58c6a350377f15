#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "umff/diff/ops.hpp"
#include "umff/diff/tensor.hpp"

namespace umff {

using diff::Tensor;

/// Named, ordered collection of trainable arrays. Insertion order is the
/// optimizer and checkpoint order.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::vector<int> dims;  // logical shape: (out, in, kh, kw) or (out)
    Tensor<T> tensor;
  };

  /// Registers `tensor` (marked requires_grad) under a unique name.
  Tensor<T> add(std::string name, std::vector<int> dims, Tensor<T> tensor);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  bool contains(std::string_view name) const;
  Tensor<T> get(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Convolution layer; padding keeps spatial size for odd kernels at stride 1.
template <typename T>
struct Conv {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;

  Tensor<T> operator()(const Tensor<T>& x) const {
    return diff::conv2d(x, weight, bias, stride, padding);
  }
  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }
};

/// He-normal kernel (std = gain * sqrt(2 / fan_in)), zero bias, registered
/// as `name.weight` and `name.bias`.
template <typename T>
Conv<T> make_conv(ParameterStore<T>& store, const std::string& name, int in_ch, int out_ch,
                  int kernel, std::mt19937_64& rng, int stride = 1, double gain = 1.0);

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace umff
