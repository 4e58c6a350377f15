#include "umff/loss.hpp"

#include <stdexcept>

namespace umff::loss {

namespace d = umff::diff;

namespace {

template <typename T>
void check_pair(const Pyramid<T>& output, const Pyramid<T>& target, const char* where) {
  for (int k = 0; k < 3; ++k) {
    if (!(output[k].shape() == target[k].shape())) {
      throw std::invalid_argument(std::string(where) + ": scale " + std::to_string(k) + " output " +
                                  output[k].shape().str() + " vs target " + target[k].shape().str());
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> content_loss(const Pyramid<T>& output, const Pyramid<T>& target,
                       std::array<double, 3>* per_scale) {
  check_pair(output, target, "content_loss");
  Tensor<T> total;
  for (int k = 0; k < 3; ++k) {
    Tensor<T> term = d::mean(d::abs(d::sub(output[k], target[k])));
    if (per_scale) (*per_scale)[k] = term.item();
    total = k == 0 ? term : d::add(total, term);
  }
  return total;
}

template <typename T>
Tensor<T> frequency_loss(const Pyramid<T>& output, const Pyramid<T>& target,
                         std::array<double, 3>* per_scale) {
  check_pair(output, target, "frequency_loss");
  Tensor<T> total;
  for (int k = 0; k < 3; ++k) {
    // fft2 doubles the channel count, so twice the mean restores the per-pixel normalization.
    Tensor<T> term = d::scale(d::mean(d::abs(d::sub(d::fft2(output[k]), d::fft2(target[k])))), T(2));
    if (per_scale) (*per_scale)[k] = term.item();
    total = k == 0 ? term : d::add(total, term);
  }
  return total;
}

template <typename T>
Tensor<T> uncertainty_loss(const Tensor<T>& output, const Tensor<T>& target,
                           const ggd::ParamMaps<std::type_identity_t<T>>& params) {
  return ggd::nll(output, target, params, ggd::Reduction::Mean);
}

template <typename T>
LossReport<T> total_loss(const Pyramid<T>& output,
                         const std::optional<ggd::ParamMaps<std::type_identity_t<T>>>& params,
                         const Pyramid<T>& target, const LossWeights& weights) {
  if (weights.lambda_fre < 0.0 || weights.lambda_ue < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  LossReport<T> r;
  r.l_con = content_loss(output, target, &r.con_per_scale);
  r.l_fre = frequency_loss(output, target, &r.fre_per_scale);
  r.l_ue = params ? uncertainty_loss(output[0], target[0], *params)
                  : Tensor<T>::scalar(T(0));
  r.l_total = d::add(d::add(r.l_con, d::scale(r.l_fre, static_cast<T>(weights.lambda_fre))),
                     d::scale(r.l_ue, static_cast<T>(weights.lambda_ue)));
  return r;
}

#define UMFF_INSTANTIATE_LOSS(T)                                                                  \
  template Tensor<T> content_loss<T>(const Pyramid<T>&, const Pyramid<T>&, std::array<double, 3>*); \
  template Tensor<T> frequency_loss<T>(const Pyramid<T>&, const Pyramid<T>&,                      \
                                       std::array<double, 3>*);                                   \
  template Tensor<T> uncertainty_loss<T>(const Tensor<T>&, const Tensor<T>&,                      \
                                         const ggd::ParamMaps<std::type_identity_t<T>>&);          \
  template LossReport<T> total_loss<T>(const Pyramid<T>&,                                       \
                                       const std::optional<ggd::ParamMaps<std::type_identity_t<T>>>&, \
                                       const Pyramid<T>&, const LossWeights&);

UMFF_INSTANTIATE_LOSS(float)
UMFF_INSTANTIATE_LOSS(double)

}  // namespace umff::loss
