#pragma once

// Heteroscedastic generalized Gaussian likelihood over per-pixel
// residuals: density proportional to exp(-(|r| / alpha)^beta), with
// variance alpha^2 Gamma(3/beta) / Gamma(1/beta).

#include "umff/diff/tensor.hpp"

namespace umff::ggd {

using diff::Tensor;

inline constexpr double kAlphaFloor = 1e-3;
inline constexpr double kBetaFloor = 0.5;
/// Residual magnitudes below this are clamped before exponentiation.
inline constexpr double kResidualFloor = 1e-6;
/// Shape the beta head starts from (Gaussian).
inline constexpr double kInitialBeta = 2.0;

/// Scale and shape maps, (n, 1, h, w) at full resolution.
template <typename T>
struct ParamMaps {
  Tensor<T> alpha;
  Tensor<T> beta;
};

enum class Reduction { Mean, Sum };

/// Per element (|pred - target| / alpha)^beta - log(beta / alpha) +
/// log Gamma(1 / beta), reduced over every element of `prediction`.
/// Single-channel maps broadcast over prediction channels. Throws
/// std::invalid_argument on shape mismatch or maps below their floors.
template <typename T>
Tensor<T> nll(const Tensor<T>& prediction, const Tensor<T>& target, const ParamMaps<T>& params,
              Reduction reduction = Reduction::Mean);

/// Elementwise GGD variance. Not differentiable; an export quantity.
template <typename T>
Tensor<T> uncertainty_map(const ParamMaps<T>& params);

/// alpha = kAlphaFloor + softplus(raw_alpha), beta = kBetaFloor + softplus(raw_beta).
template <typename T>
ParamMaps<T> param_transform(const Tensor<T>& raw_alpha, const Tensor<T>& raw_beta);

// Scalar forms, used by exporters and tests.
double nll_value(double residual, double alpha, double beta);
double variance(double alpha, double beta);
/// Raw head output that `param_transform` maps to the given beta.
double raw_beta_for(double beta);
double raw_alpha_for(double alpha);

}  // namespace umff::ggd
