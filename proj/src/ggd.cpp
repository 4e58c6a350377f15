#include "umff/ggd.hpp"

#include <cmath>
#include <sstream>

#include "umff/diff/ops.hpp"
#include "umff/diff/special.hpp"

namespace umff::ggd {

namespace {

template <typename T>
void validate(const Tensor<T>& prediction, const Tensor<T>& target, const ParamMaps<T>& params) {
  const auto& ps = prediction.shape();
  if (!(target.shape() == ps)) {
    throw std::invalid_argument("ggd::nll: prediction " + ps.str() + " and target " +
                                target.shape().str() + " differ");
  }
  const auto& as = params.alpha.shape();
  if (!(params.beta.shape() == as)) {
    throw std::invalid_argument("ggd::nll: alpha " + as.str() + " and beta " +
                                params.beta.shape().str() + " differ");
  }
  if (as.n != ps.n || as.h != ps.h || as.w != ps.w || (as.c != 1 && as.c != ps.c)) {
    throw std::invalid_argument("ggd::nll: parameter maps " + as.str() +
                                " do not match prediction " + ps.str());
  }
  const T alpha_floor = static_cast<T>(kAlphaFloor);
  const T beta_floor = static_cast<T>(kBetaFloor);
  for (T a : params.alpha.data()) {
    if (!(a >= alpha_floor)) {
      std::ostringstream os;
      os << "ggd::nll: alpha " << a << " below floor " << kAlphaFloor;
      throw std::invalid_argument(os.str());
    }
  }
  for (T b : params.beta.data()) {
    if (!(b >= beta_floor)) {
      std::ostringstream os;
      os << "ggd::nll: beta " << b << " below floor " << kBetaFloor;
      throw std::invalid_argument(os.str());
    }
  }
}

}  // namespace

double nll_value(double residual, double alpha, double beta) {
  const double r = std::max(std::abs(residual), kResidualFloor);
  return std::pow(r / alpha, beta) - std::log(beta / alpha) + diff::log_gamma(1.0 / beta);
}

double variance(double alpha, double beta) {
  return alpha * alpha * std::exp(diff::log_gamma(3.0 / beta) - diff::log_gamma(1.0 / beta));
}

double raw_beta_for(double beta) { return diff::inverse_softplus(beta - kBetaFloor); }
double raw_alpha_for(double alpha) { return diff::inverse_softplus(alpha - kAlphaFloor); }

template <typename T>
Tensor<T> nll(const Tensor<T>& prediction, const Tensor<T>& target, const ParamMaps<T>& params,
              Reduction reduction) {
  validate(prediction, target, params);
  const diff::Shape ps = prediction.shape();
  const bool shared = params.alpha.shape().c == 1;
  const std::size_t plane = ps.plane();
  const double count = static_cast<double>(prediction.numel());
  const double norm = reduction == Reduction::Mean ? 1.0 / count : 1.0;

  auto pd = prediction.data();
  auto td = target.data();
  auto ad = params.alpha.data();
  auto bd = params.beta.data();
  auto map_index = [shared, plane, ps](int n, int c, std::size_t i) {
    return shared ? static_cast<std::size_t>(n) * plane + i
                  : (static_cast<std::size_t>(n) * ps.c + c) * plane + i;
  };

  double acc = 0.0;
  for (int n = 0; n < ps.n; ++n) {
    for (int c = 0; c < ps.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * ps.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t m = map_index(n, c, i);
        acc += nll_value(static_cast<double>(pd[base + i]) - td[base + i], ad[m], bd[m]);
      }
    }
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc * norm));
  diff::check_finite<T>(out.data(), "ggd::nll");

  const Tensor<T> alpha = params.alpha;
  const Tensor<T> beta = params.beta;
  diff::detail::record<T>(
      diff::Op::ggd_nll, {prediction, target, alpha, beta}, out,
      [prediction, target, alpha, beta, out, ps, plane, norm, map_index]() mutable {
        const double g = static_cast<double>(out.grad()[0]) * norm;
        const bool need_p = prediction.requires_grad();
        const bool need_t = target.requires_grad();
        const bool need_a = alpha.requires_grad();
        const bool need_b = beta.requires_grad();
        std::span<T> gp = need_p ? prediction.ensure_grad() : std::span<T>{};
        std::span<T> gt = need_t ? target.ensure_grad() : std::span<T>{};
        std::span<T> ga = need_a ? alpha.ensure_grad() : std::span<T>{};
        std::span<T> gb = need_b ? beta.ensure_grad() : std::span<T>{};
        auto pd = prediction.data();
        auto td = target.data();
        auto ad = alpha.data();
        auto bd = beta.data();
        for (int n = 0; n < ps.n; ++n) {
          for (int c = 0; c < ps.c; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * ps.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t m = map_index(n, c, i);
              const double a = ad[m];
              const double b = bd[m];
              const double d = static_cast<double>(pd[base + i]) - td[base + i];
              const bool clamped = std::abs(d) < kResidualFloor;
              const double r = clamped ? kResidualFloor : std::abs(d);
              const double z = r / a;
              const double zb = std::pow(z, b);
              if ((need_p || need_t) && !clamped) {
                const double dr = b * zb / r * (d > 0.0 ? 1.0 : -1.0);
                if (need_p) gp[base + i] += static_cast<T>(g * dr);
                if (need_t) gt[base + i] -= static_cast<T>(g * dr);
              }
              if (need_a) ga[m] += static_cast<T>(g * (1.0 - b * zb) / a);
              if (need_b) {
                const double inv_b = 1.0 / b;
                gb[m] += static_cast<T>(
                    g * (zb * std::log(z) - inv_b - diff::digamma(inv_b) * inv_b * inv_b));
              }
            }
          }
        }
      });
  return out;
}

template <typename T>
Tensor<T> uncertainty_map(const ParamMaps<T>& params) {
  if (!(params.alpha.shape() == params.beta.shape())) {
    throw std::invalid_argument("uncertainty_map: alpha and beta shapes differ");
  }
  Tensor<T> out = Tensor<T>::zeros(params.alpha.shape());
  auto ad = params.alpha.data();
  auto bd = params.beta.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = static_cast<T>(variance(ad[i], bd[i]));
  diff::check_finite<T>(out.data(), "uncertainty_map");
  return out;
}

template <typename T>
ParamMaps<T> param_transform(const Tensor<T>& raw_alpha, const Tensor<T>& raw_beta) {
  if (!(raw_alpha.shape() == raw_beta.shape())) {
    throw std::invalid_argument("param_transform: raw maps " + raw_alpha.shape().str() + " and " +
                                raw_beta.shape().str() + " differ");
  }
  return ParamMaps<T>{diff::add_scalar(diff::softplus(raw_alpha), static_cast<T>(kAlphaFloor)),
                      diff::add_scalar(diff::softplus(raw_beta), static_cast<T>(kBetaFloor))};
}

template Tensor<float> nll<float>(const Tensor<float>&, const Tensor<float>&,
                                  const ParamMaps<float>&, Reduction);
template Tensor<double> nll<double>(const Tensor<double>&, const Tensor<double>&,
                                    const ParamMaps<double>&, Reduction);
template Tensor<float> uncertainty_map<float>(const ParamMaps<float>&);
template Tensor<double> uncertainty_map<double>(const ParamMaps<double>&);
template ParamMaps<float> param_transform<float>(const Tensor<float>&, const Tensor<float>&);
template ParamMaps<double> param_transform<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace umff::ggd
