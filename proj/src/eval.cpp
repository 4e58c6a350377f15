#include "umff/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace umff::eval {

using diff::Shape;

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y) {
  if (!(x.shape() == y.shape())) {
    throw std::invalid_argument("psnr: shapes " + x.shape().str() + " and " + y.shape().str() + " differ");
  }
  auto a = x.data();
  auto b = y.data();
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

template <typename T>
std::vector<double> luma(const Tensor<T>& image) {
  const Shape s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw std::invalid_argument("luma: expected (1, 1|3, H, W), got " + s.str());
  const std::size_t plane = s.plane();
  auto d = image.data();
  std::vector<double> y(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    y[i] = s.c == 1 ? static_cast<double>(d[i])
                    : 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
  }
  return y;
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double t = i - kWindow / 2;
    g[i] = std::exp(-t * t / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Valid-position separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::array<double, kWindow>& g) {
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& y) {
  if (!(x.shape() == y.shape())) {
    throw std::invalid_argument("ssim: shapes " + x.shape().str() + " and " + y.shape().str() + " differ");
  }
  const Shape s = x.shape();
  if (s.h < kWindow || s.w < kWindow) {
    throw std::invalid_argument("ssim: image " + s.str() + " is smaller than the 11x11 window");
  }
  const auto a = luma(x);
  const auto b = luma(y);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto g = gaussian_taps();
  const auto mu_a = filter_valid(a, s.h, s.w, g);
  const auto mu_b = filter_valid(b, s.h, s.w, g);
  const auto e_aa = filter_valid(aa, s.h, s.w, g);
  const auto e_bb = filter_valid(bb, s.h, s.w, g);
  const auto e_ab = filter_valid(ab, s.h, s.w, g);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[idx[j]] == values[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: sizes differ");
  if (a.size() < 2) return std::nullopt;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> abs_error_map(const Tensor<float>& prediction, const Tensor<float>& target) {
  if (!(prediction.shape() == target.shape())) throw std::invalid_argument("abs_error_map: shapes differ");
  const Shape s = prediction.shape();
  const std::size_t plane = s.plane();
  auto p = prediction.data();
  auto t = target.data();
  std::vector<double> out(static_cast<std::size_t>(s.n) * plane, 0.0);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        out[n * plane + i] += std::abs(static_cast<double>(p[base + i]) - t[base + i]) / s.c;
      }
    }
  return out;
}

namespace {

void check_fractions(std::span<const double> fractions) {
  if (fractions.empty()) throw std::invalid_argument("sparsification: empty fraction list");
  for (double f : fractions) {
    if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument("sparsification: fractions must lie in [0, 1)");
  }
}

std::vector<double> remaining_means(const std::vector<std::size_t>& removal_order, std::span<const double> error,
                                    std::span<const double> fractions) {
  const std::size_t n = error.size();
  // suffix[i] = sum of errors of pixels removal_order[i..n).
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + error[removal_order[i]];
  std::vector<double> out;
  for (double f : fractions) {
    const auto removed = static_cast<std::size_t>(std::floor(f * static_cast<double>(n)));
    out.push_back(suffix[removed] / static_cast<double>(n - removed));
  }
  return out;
}

}  // namespace

std::vector<double> sparsification_curve(std::span<const double> uncertainty, std::span<const double> error,
                                         std::span<const double> fractions) {
  if (uncertainty.size() != error.size()) throw std::invalid_argument("sparsification: sizes differ");
  if (error.empty()) throw std::invalid_argument("sparsification: empty maps");
  check_fractions(fractions);
  std::vector<std::size_t> order(error.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return uncertainty[i] > uncertainty[j]; });
  return remaining_means(order, error, fractions);
}

std::vector<double> random_sparsification(std::span<const double> error, std::span<const double> fractions,
                                          std::mt19937_64& rng) {
  if (error.empty()) throw std::invalid_argument("sparsification: empty maps");
  check_fractions(fractions);
  std::vector<std::size_t> order(error.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return remaining_means(order, error, fractions);
}

TimingStats time_inference(const model::Model<float>& model, const Tensor<float>& image, int repeats) {
  if (repeats < 1) throw std::invalid_argument("time_inference: repeats must be positive");
  if (image.shape().n != 1) throw std::invalid_argument("time_inference: expected a single image");
  (void)model.forward(image);
  TimingStats st;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)model.forward(image);
    const auto t1 = std::chrono::steady_clock::now();
    st.samples.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::vector<double> sorted = st.samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  st.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  st.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(m);
  return st;
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

namespace {

std::string format_optional(const std::optional<double>& v) { return v ? format_metric(*v) : "degenerate"; }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::string EvalReport::to_text() const {
  std::ostringstream os;
  for (const auto& r : rows) {
    os << "image=" << r.id << " psnr_input=" << format_metric(r.psnr_input)
       << " psnr_output=" << format_metric(r.psnr_output) << " ssim_output=" << format_metric(r.ssim_output)
       << " spearman=" << format_optional(r.spearman)
       << " sparsification_error=" << format_metric(r.sparsification_error)
       << " random_error=" << format_metric(r.random_error) << '\n';
  }
  os << "images=" << rows.size() << '\n';
  os << "mean_psnr_input=" << format_metric(mean_psnr_input) << '\n';
  os << "mean_psnr_output=" << format_metric(mean_psnr_output) << '\n';
  os << "mean_ssim_output=" << format_metric(mean_ssim_output) << '\n';
  os << "mean_spearman=" << format_optional(mean_spearman) << '\n';
  if (timing) {
    os << "time_median_s=" << format_metric(timing->median) << '\n';
    os << "time_mean_s=" << format_metric(timing->mean) << '\n';
  }
  os << "note=SSIM uses an 11x11 Gaussian window on luma; values are not comparable to other SSIM settings\n";
  return os.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.id << ',' << format_metric(r.psnr_input) << ',' << format_metric(r.psnr_output) << ','
       << format_metric(r.ssim_output) << ',' << format_optional(r.spearman) << ','
       << format_metric(r.sparsification_error) << ',' << format_metric(r.random_error) << '\n';
  }
  return os.str();
}

EvalReport evaluate(const model::Model<float>& model, const std::vector<data::PairedSample>& samples,
                    int timing_repeats, std::uint64_t seed) {
  EvalReport rep;
  std::mt19937_64 rng(seed);
  const double fraction[] = {0.2};
  std::vector<double> pin, pout, sout, rho;
  for (const auto& s : samples) {
    model::check_input_shape(s.rainy.shape());
    const auto out = model.forward(s.rainy);
    const Tensor<float>& pred = out.derained[0];
    ImageRow row;
    row.id = s.id;
    row.psnr_input = psnr(s.rainy, s.clean);
    row.psnr_output = psnr(pred, s.clean);
    row.ssim_output = ssim(pred, s.clean);
    const auto err = abs_error_map(pred, s.clean);
    if (out.uncertainty.defined()) {
      const std::vector<double> unc(out.uncertainty.data().begin(), out.uncertainty.data().end());
      row.spearman = spearman(unc, err);
      row.sparsification_error = sparsification_curve(unc, err, fraction)[0];
    } else {
      row.sparsification_error = std::numeric_limits<double>::quiet_NaN();
    }
    row.random_error = random_sparsification(err, fraction, rng)[0];
    pin.push_back(row.psnr_input);
    pout.push_back(row.psnr_output);
    sout.push_back(row.ssim_output);
    if (row.spearman) rho.push_back(*row.spearman);
    rep.rows.push_back(std::move(row));
  }
  rep.mean_psnr_input = mean_of(pin);
  rep.mean_psnr_output = mean_of(pout);
  rep.mean_ssim_output = mean_of(sout);
  if (!rho.empty()) rep.mean_spearman = mean_of(rho);
  if (timing_repeats > 0 && !samples.empty()) rep.timing = time_inference(model, samples.front().rainy, timing_repeats);
  return rep;
}

template double psnr<float>(const Tensor<float>&, const Tensor<float>&);
template double psnr<double>(const Tensor<double>&, const Tensor<double>&);
template std::vector<double> luma<float>(const Tensor<float>&);
template std::vector<double> luma<double>(const Tensor<double>&);
template double ssim<float>(const Tensor<float>&, const Tensor<float>&);
template double ssim<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace umff::eval
