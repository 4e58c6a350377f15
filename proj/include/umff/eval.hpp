#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "umff/data.hpp"
#include "umff/model.hpp"

namespace umff::eval {

using diff::Tensor;

/// 10 log10(1 / MSE) at peak 1. Identical inputs give +infinity.
template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y);

/// ITU-R 601 luma of a (1, 3, H, W) image, or the single channel of (1, 1, H, W).
template <typename T>
std::vector<double> luma(const Tensor<T>& image);

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) window positions of
/// the luma, with C1 = 0.01^2 and C2 = 0.03^2.
template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& y);

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman correlation, or nullopt when either input is constant.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

/// Per-pixel |prediction - target| averaged over channels, as (n, 1, H, W) values.
std::vector<double> abs_error_map(const Tensor<float>& prediction, const Tensor<float>& target);

/// Mean remaining error after removing the floor(f * n) most uncertain pixels,
/// one value per fraction. Fractions lie in [0, 1).
std::vector<double> sparsification_curve(std::span<const double> uncertainty, std::span<const double> error,
                                         std::span<const double> fractions);

/// Same removal with pixels dropped in a random order.
std::vector<double> random_sparsification(std::span<const double> error, std::span<const double> fractions,
                                          std::mt19937_64& rng);

struct TimingStats {
  double median = 0.0;
  double mean = 0.0;
  std::vector<double> samples;  // seconds
};

/// Times `repeats` single-image forward passes after one warm-up pass.
TimingStats time_inference(const model::Model<float>& model, const Tensor<float>& image, int repeats);

struct ImageRow {
  std::string id;
  double psnr_input = 0.0;
  double psnr_output = 0.0;
  double ssim_output = 0.0;
  std::optional<double> spearman;  // nullopt: degenerate or no uncertainty branch
  double sparsification_error = 0.0;  // remaining error at f = 0.2
  double random_error = 0.0;          // random removal at f = 0.2
};

struct EvalReport {
  std::vector<ImageRow> rows;
  double mean_psnr_input = 0.0;
  double mean_psnr_output = 0.0;
  double mean_ssim_output = 0.0;
  std::optional<double> mean_spearman;
  std::optional<TimingStats> timing;

  /// key=value lines, one block per image followed by aggregates.
  std::string to_text() const;
  /// Fixed header: see kCsvHeader.
  std::string to_csv() const;
};

inline constexpr const char* kCsvHeader =
    "id,psnr_input,psnr_output,ssim_output,spearman,sparsification_error,random_error";

/// Prints a double the way reports do: "inf" for +infinity, "nan" for NaN.
std::string format_metric(double v);

/// Runs the model on every sample and collects metrics. `timing_repeats` > 0
/// also times inference on the first sample.
EvalReport evaluate(const model::Model<float>& model, const std::vector<data::PairedSample>& samples,
                    int timing_repeats = 0, std::uint64_t seed = 0);

}  // namespace umff::eval
