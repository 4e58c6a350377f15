#pragma once

namespace umff::diff {

// Both shift the argument above 10 with the recurrence and finish with the
// asymptotic series. Absolute error is below 1e-13 on [0.1, 100].
// Arguments <= 0 throw std::domain_error.
double log_gamma(double x);
double digamma(double x);

/// ln(1 + e^x) without overflow for large x.
double softplus(double x);

/// Inverse of softplus for y > 0.
double inverse_softplus(double y);

/// 1 / (1 + e^-x).
double sigmoid(double x);

}  // namespace umff::diff
