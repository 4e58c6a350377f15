#include "umff/params.hpp"

#include <cmath>
#include <stdexcept>

namespace umff {

template <typename T>
Tensor<T> ParameterStore<T>::add(std::string name, std::vector<int> dims, Tensor<T> tensor) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  std::size_t count = 1;
  for (int d : dims) count *= static_cast<std::size_t>(d);
  if (count != tensor.numel()) {
    throw std::invalid_argument("parameter " + name + ": dims do not match tensor size");
  }
  tensor.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(dims), tensor});
  return tensor;
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

template <typename T>
Tensor<T> ParameterStore<T>::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return entries_[it->second].tensor;
}

template <typename T>
std::size_t ParameterStore<T>::total_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.tensor.numel();
  return total;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
Conv<T> make_conv(ParameterStore<T>& store, const std::string& name, int in_ch, int out_ch,
                  int kernel, std::mt19937_64& rng, int stride, double gain) {
  const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
  std::normal_distribution<double> normal(0.0, gain * std::sqrt(2.0 / fan_in));
  std::vector<T> w(static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel);
  for (auto& v : w) v = static_cast<T>(normal(rng));
  Conv<T> conv;
  conv.weight = store.add(name + ".weight", {out_ch, in_ch, kernel, kernel},
                          Tensor<T>::from(diff::Shape{out_ch, in_ch, kernel, kernel}, std::move(w)));
  conv.bias = store.add(name + ".bias", {out_ch}, Tensor<T>::zeros(diff::Shape{1, out_ch, 1, 1}));
  conv.stride = stride;
  conv.padding = kernel / 2;
  return conv;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Conv<float> make_conv<float>(ParameterStore<float>&, const std::string&, int, int, int,
                                      std::mt19937_64&, int, double);
template Conv<double> make_conv<double>(ParameterStore<double>&, const std::string&, int, int, int,
                                        std::mt19937_64&, int, double);

}  // namespace umff
