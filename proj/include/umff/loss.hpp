#pragma once

#include <array>
#include <optional>
#include <type_traits>

#include "umff/ggd.hpp"
#include "umff/model.hpp"
#include "umff/pyramid.hpp"

namespace umff::loss {

using diff::Tensor;

struct LossWeights {
  double lambda_fre = 0.1;
  double lambda_ue = 0.1;
};

template <typename T>
struct LossReport {
  Tensor<T> l_con;
  Tensor<T> l_fre;
  Tensor<T> l_ue;
  Tensor<T> l_total;
  std::array<double, 3> con_per_scale{};
  std::array<double, 3> fre_per_scale{};
};

/// Sum over scales of mean |output - target|.
template <typename T>
Tensor<T> content_loss(const Pyramid<T>& output, const Pyramid<T>& target,
                       std::array<double, 3>* per_scale = nullptr);

/// Sum over scales of the per-pixel mean of |Re| + |Im| of the spectrum
/// difference, normalized by n * c * h * w. Spatial sizes must be powers of two.
template <typename T>
Tensor<T> frequency_loss(const Pyramid<T>& output, const Pyramid<T>& target,
                         std::array<double, 3>* per_scale = nullptr);

/// Mean GGD negative log-likelihood at the full scale only.
template <typename T>
Tensor<T> uncertainty_loss(const Tensor<T>& output, const Tensor<T>& target,
                           const ggd::ParamMaps<std::type_identity_t<T>>& params);

/// l_total = l_con + lambda_fre * l_fre + lambda_ue * l_ue. Without
/// parameter maps l_ue is a constant zero.
template <typename T>
LossReport<T> total_loss(const Pyramid<T>& output,
                         const std::optional<ggd::ParamMaps<std::type_identity_t<T>>>& params,
                         const Pyramid<T>& target, const LossWeights& weights = {});

template <typename T>
LossReport<T> total_loss(const model::ModelOutput<T>& output, const Pyramid<T>& target,
                         const LossWeights& weights = {}) {
  return total_loss(output.derained, output.params, target, weights);
}

}  // namespace umff::loss
