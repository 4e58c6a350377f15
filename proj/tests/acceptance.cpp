// Acceptance gate: one PASS/FAIL line per criterion. Arguments select a subset
// of criteria by number; no arguments runs all ten.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck_suite.hpp"
#include "oracles.hpp"
#include "umff/checkpoint.hpp"
#include "umff/data.hpp"
#include "umff/diff/ops.hpp"
#include "umff/diff/special.hpp"
#include "umff/eval.hpp"
#include "umff/ggd.hpp"
#include "umff/loss.hpp"
#include "umff/model.hpp"
#include "umff/train.hpp"

using namespace umff;
namespace fs = std::filesystem;
using TD = diff::Tensor<double>;
using TF = diff::Tensor<float>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

// Collects failed sub-checks; a criterion passes when none failed.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok) failures_.push_back(what);
  }
  bool ok() const { return failures_.empty(); }
  std::string summary() const {
    std::ostringstream os;
    os << (total_ - failures_.size()) << "/" << total_ << " checks";
    for (std::size_t i = 0; i < std::min<std::size_t>(failures_.size(), 5); ++i) os << "; failed: " << failures_[i];
    if (failures_.size() > 5) os << "; +" << failures_.size() - 5 << " more";
    return os.str();
  }

 private:
  std::size_t total_ = 0;
  std::vector<std::string> failures_;
};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

Verdict with_runtime(Checks& c, Clock::time_point t0, double limit_s) {
  const double s = seconds_since(t0);
  c.expect(s < limit_s, "runtime " + fmt(s) + " s >= " + fmt(limit_s) + " s");
  return {c.ok(), c.summary() + "; runtime " + fmt(s) + " s (limit " + fmt(limit_s) + " s)"};
}

// ---------------------------------------------------------------- 1

double tensor_nll(double r, double a, double b) {
  const diff::Shape s{1, 1, 1, 1};
  return ggd::nll(TD::filled(s, r), TD::zeros(s), {TD::filled(s, a), TD::filled(s, b)}, ggd::Reduction::Mean)
      .item();
}

Verdict criterion1() {
  const auto t0 = Clock::now();
  Checks c;
  const double lg_half = testing::series_log_gamma(0.5);
  // r = 0 is clamped to r_floor before exponentiation; the closed form below
  // includes that r_floor^beta term.
  const double r_floor = 1e-6;
  c.expect(rel_err(tensor_nll(0.0, 1.0, 1.0), r_floor) < 1e-8, "nll(r=0, a=1, b=1) = clamp term");
  c.expect(rel_err(tensor_nll(1.0, 1.0, 1.0), 1.0) < 1e-8, "nll(r=1, a=1, b=1) = 1");
  const double want_b2 = r_floor * r_floor - std::log(2.0) + lg_half;
  c.expect(rel_err(tensor_nll(0.0, 1.0, 2.0), want_b2) < 1e-8, "nll(r=0, a=1, b=2) = -ln 2 + ln Gamma(1/2)");
  c.expect(std::abs(tensor_nll(0.0, 1.0, 2.0) + 0.1207823) < 1e-7, "nll(r=0, a=1, b=2) ~ -0.1207823");

  const diff::Shape s3{1, 1, 1, 3};
  const TD u = ggd::uncertainty_map<double>({TD::from(s3, {1.0, 1.0, 2.0}), TD::from(s3, {2.0, 1.0, 2.0})});
  c.expect(rel_err(u.data()[0], 0.5) < 1e-8, "variance(1, 2) = 0.5");
  c.expect(rel_err(u.data()[1], 2.0) < 1e-8, "variance(1, 1) = 2");
  c.expect(rel_err(u.data()[2], 2.0) < 1e-8, "variance(2, 2) = 2");

  for (double sigma : {0.05, 0.3, 1.0, 2.5}) {
    const double alpha = sigma * std::sqrt(2.0);
    std::vector<double> r(100);
    for (int i = 0; i < 100; ++i) r[i] = sigma * (-3.0 + 6.0 * (i + 0.5) / 100.0);
    const diff::Shape s{1, 1, 1, 100};
    const TD pred = TD::from(s, r);
    const TD per_pixel = ggd::nll(pred, TD::zeros(s), {TD::filled(s, alpha), TD::filled(s, 2.0)},
                                  ggd::Reduction::Sum);
    double max_dev = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double gauss = r[i] * r[i] / (2 * sigma * sigma) + std::log(sigma) + 0.5 * std::log(2 * std::numbers::pi);
      max_dev = std::max(max_dev, rel_err(ggd::nll_value(r[i], alpha, 2.0) - gauss, -std::log(2.0)));
    }
    c.expect(max_dev < 1e-8, "Gaussian offset constant for sigma " + fmt(sigma));
    double gauss_sum = 0.0;
    for (double ri : r) gauss_sum += ri * ri / (2 * sigma * sigma) + std::log(sigma) + 0.5 * std::log(2 * std::numbers::pi);
    c.expect(rel_err(per_pixel.item() - gauss_sum, -100 * std::log(2.0)) < 1e-8,
             "tensor Gaussian offset for sigma " + fmt(sigma));
    c.expect(rel_err(ggd::variance(alpha, 2.0), sigma * sigma) < 1e-8, "Gaussian variance sigma^2");
  }
  for (double alpha : {0.01, 0.2, 1.0, 7.0}) {
    c.expect(rel_err(ggd::variance(alpha, 1.0), 2 * alpha * alpha) < 1e-8, "Laplace variance 2 alpha^2");
  }
  return with_runtime(c, t0, 5.0);
}

// ---------------------------------------------------------------- 2

Verdict criterion2() {
  const auto t0 = Clock::now();
  Checks c;
  double worst_lg = 0.0, worst_dg = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = 0.1 + (100.0 - 0.1) * i / 999.0;
    worst_lg = std::max(worst_lg, std::abs(diff::log_gamma(x) - testing::series_log_gamma(x)));
    worst_dg = std::max(worst_dg, std::abs(diff::digamma(x) - testing::series_digamma(x)));
  }
  c.expect(worst_lg < 1e-10, "log_gamma max abs error " + fmt(worst_lg));
  c.expect(worst_dg < 1e-10, "digamma max abs error " + fmt(worst_dg));
  auto v = with_runtime(c, t0, 5.0);
  v.detail += "; max |err| log_gamma " + fmt(worst_lg, 3) + ", digamma " + fmt(worst_dg, 3);
  return v;
}

// ---------------------------------------------------------------- 3

Verdict criterion3() {
  const auto t0 = Clock::now();
  Checks c;
  std::vector<testing::CheckOutcome> all;
  for (auto&& group : {testing::op_gradchecks(), testing::block_gradchecks(), testing::loss_gradchecks()}) {
    all.insert(all.end(), group.begin(), group.end());
  }
  std::map<std::string, int> passing;
  for (const auto& o : all) {
    c.expect(o.ok, o.name + ": " + o.detail);
    if (o.ok) ++passing[o.target];
  }
  std::vector<std::string> required;
  for (diff::Op op : diff::all_ops()) required.emplace_back(diff::op_name(op));
  for (const char* b : {"rab", "residual", "sffb", "mfb_level0", "mfb_level1", "mfb_level2", "uncertainty_head",
                        "uffb_B1", "uffb_B2", "uffb_B3", "content_loss", "frequency_loss", "uncertainty_loss",
                        "total_loss"}) {
    required.emplace_back(b);
  }
  for (const auto& r : required) c.expect(passing[r] >= 3, r + " passes on " + std::to_string(passing[r]) + " shapes");
  auto v = with_runtime(c, t0, 120.0);
  v.detail += "; " + std::to_string(all.size()) + " cases over " + std::to_string(required.size()) + " targets";
  return v;
}

// ---------------------------------------------------------------- 4

Verdict criterion4() {
  const auto t0 = Clock::now();
  Checks c;
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n : {8, 16}) {
    std::vector<double> plane(static_cast<std::size_t>(n * n));
    for (auto& x : plane) x = u(rng);
    const TD f = diff::fft2(TD::from({1, 1, n, n}, plane));
    const auto want = testing::naive_dft2(plane, n, n);
    double err = 0.0, energy_x = 0.0, energy_f = 0.0;
    for (int k = 0; k < n * n; ++k) {
      const double re = f.data()[k], im = f.data()[n * n + k];
      err = std::max({err, std::abs(re - want[k].real()), std::abs(im - want[k].imag())});
      energy_f += re * re + im * im;
      energy_x += plane[k] * plane[k];
    }
    c.expect(err < 1e-9, std::to_string(n) + "x" + std::to_string(n) + " vs naive DFT max diff " + fmt(err));
    c.expect(std::abs(energy_x * n * n - energy_f) <= 1e-9 * energy_f, "Parseval " + std::to_string(n));
  }
  return with_runtime(c, t0, 10.0);
}

// ---------------------------------------------------------------- 5

TF random_image(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(3 * size * size));
  for (auto& x : v) x = u(rng);
  return TF::from({1, 3, size, size}, std::move(v));
}

Verdict criterion5() {
  Checks c;
  using model::ModelConfig;
  using model::Variant;
  const auto count = [](const ModelConfig& cfg) { return model::Model<float>::build(cfg, 1).count_params(); };
  const auto t = count(ModelConfig::preset(Variant::T));
  const auto b = count(ModelConfig::preset(Variant::B));
  const auto l = count(ModelConfig::preset(Variant::L));
  c.expect(t < b && b < l, "T < B < L");
  c.expect(t >= 1'000'000 && t <= 2'600'000, "T count in [1.0, 2.6] million");

  const std::vector<std::pair<const char*, std::function<void(ModelConfig&)>>> toggles = {
      {"uffb", [](ModelConfig& m) { m.enable_uffb = false; }},
      {"sffb", [](ModelConfig& m) { m.enable_sffb = false; }},
      {"mfb", [](ModelConfig& m) { m.enable_mfb = false; }},
      {"uncertainty",
       [](ModelConfig& m) {
         m.enable_uncertainty = false;
         m.enable_uffb = false;
       }},
      {"rab", [](ModelConfig& m) { m.use_rab = false; }},
  };
  const TF img = random_image(16, 5);
  const auto target = make_pyramid(random_image(16, 6));
  for (const auto& [name, apply] : toggles) {
    ModelConfig cfg = ModelConfig::preset(Variant::T);
    apply(cfg);
    auto m = model::Model<float>::build(cfg, 1);
    c.expect(m.count_params() < t, std::string(name) + " reduces the count");
    diff::Tape<float> tape;
    diff::TapeScope<float> scope(tape);
    const auto out = m.forward(img);
    c.expect(out.derained[0].shape() == img.shape(), std::string(name) + " full-scale shape");
    c.expect(out.derained[1].shape() == diff::Shape{1, 3, 8, 8}, std::string(name) + " half-scale shape");
    c.expect(out.derained[2].shape() == diff::Shape{1, 3, 4, 4}, std::string(name) + " quarter-scale shape");
    c.expect(out.uncertainty.defined() == cfg.enable_uncertainty, std::string(name) + " uncertainty presence");
    auto r = loss::total_loss(out, target);
    diff::backward(r.l_total, tape);
    bool all_grads = true;
    for (const auto& e : m.params().entries()) {
      if (!e.tensor.has_grad() || e.tensor.grad().size() != e.tensor.data().size()) all_grads = false;
    }
    c.expect(all_grads, std::string(name) + " backward reaches every parameter");
  }
  return {c.ok(), c.summary() + "; counts T " + std::to_string(t) + ", B " + std::to_string(b) + ", L " +
                      std::to_string(l)};
}

// ---------------------------------------------------------------- 6, 7, 8

constexpr int kTrainPairs = 20;
constexpr int kTrainSize = 64;
constexpr int kTrainSteps = 500;
constexpr std::uint64_t kTrainSeed = 1;

std::vector<data::PairedSample> training_pairs() {
  constexpr data::Pattern kPatterns[] = {data::Pattern::Gradient, data::Pattern::Checkerboard, data::Pattern::Texture};
  std::vector<data::PairedSample> pairs;
  for (int i = 0; i < kTrainPairs; ++i) {
    data::RainSpec spec;
    spec.seed = 2000 + static_cast<std::uint64_t>(i);
    pairs.push_back(data::synthesize_rain(data::procedural_clean(kPatterns[i % 3], kTrainSize, 1000 + i), spec,
                                          "train" + std::to_string(i)));
  }
  return pairs;
}

train::TrainConfig training_config() {
  train::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.crop = kTrainSize;
  cfg.epochs = kTrainSteps / (kTrainPairs / cfg.batch_size);
  cfg.max_steps = kTrainSteps;
  cfg.lr_decay_every = 50;
  cfg.seed = kTrainSeed;
  return cfg;
}

struct TrainedRun {
  model::Model<float> model;
  train::TrainResult result;
  std::string checkpoint_bytes;
  double seconds = 0.0;
};

TrainedRun desk_run(const std::vector<data::PairedSample>& pairs) {
  const auto t0 = Clock::now();
  auto m = model::Model<float>::build(model::ModelConfig::preset(model::Variant::T), kTrainSeed);
  auto result = train::train(m, pairs, training_config());
  const double s = seconds_since(t0);
  std::string bytes = checkpoint::encode(checkpoint::capture(m, &result.optimizer));
  return {std::move(m), std::move(result), std::move(bytes), s};
}

Verdict criterion6(const TrainedRun& run, const std::vector<data::PairedSample>& pairs) {
  Checks c;
  const auto& log = run.result.log;
  c.expect(run.result.steps == kTrainSteps, "ran " + std::to_string(run.result.steps) + " steps");
  const auto at10 = std::find_if(log.begin(), log.end(), [](const train::StepMetrics& m) { return m.step == 10; });
  c.expect(at10 != log.end() && !log.empty(), "step 10 logged");
  double l10 = NAN, lfin = NAN, drop = NAN;
  if (at10 != log.end()) {
    l10 = at10->l_total;
    lfin = log.back().l_total;
    drop = (l10 - lfin) / std::abs(l10);
    c.expect(drop >= 0.5, "l_total drop " + fmt(100 * drop, 3) + "% < 50%");
  }
  const auto report = eval::evaluate(run.model, pairs);
  const double gain = report.mean_psnr_output - report.mean_psnr_input;
  c.expect(gain >= 3.0, "PSNR gain " + fmt(gain) + " dB < 3 dB");
  c.expect(run.seconds < 600.0, "runtime " + fmt(run.seconds) + " s >= 600 s");
  std::ostringstream os;
  os << c.summary() << "; PSNR input " << fmt(report.mean_psnr_input) << " dB -> output "
     << fmt(report.mean_psnr_output) << " dB (gain " << fmt(gain) << "); l_total step 10 " << fmt(l10) << " -> final "
     << fmt(lfin) << " (drop " << fmt(100 * drop, 3) << "%); runtime " << fmt(run.seconds) << " s (limit 600 s)";
  return {c.ok(), os.str()};
}

Verdict criterion7(const TrainedRun& run) {
  Checks c;
  data::RainSpec spec;
  spec.seed = 9002;
  const auto held = data::synthesize_rain(data::procedural_clean(data::Pattern::Texture, kTrainSize, 9001), spec);
  const auto out = run.model.forward(held.rainy);
  c.expect(out.uncertainty.defined(), "uncertainty map present");
  if (!out.uncertainty.defined()) return {false, c.summary()};
  const std::vector<double> unc(out.uncertainty.data().begin(), out.uncertainty.data().end());
  const auto err = eval::abs_error_map(out.derained[0], held.clean);
  const auto rho = eval::spearman(unc, err);
  c.expect(rho.has_value() && *rho > 0.3, "Spearman " + (rho ? fmt(*rho) : std::string("degenerate")) + " <= 0.3");
  const double f[] = {0.2};
  const double ours = eval::sparsification_curve(unc, err, f)[0];
  std::mt19937_64 rng(77);
  int dominated = 0;
  double random_sum = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double r = eval::random_sparsification(err, f, rng)[0];
    random_sum += r;
    dominated += ours < r;
  }
  c.expect(dominated >= 8, std::to_string(dominated) + "/10 random baselines dominated");
  std::ostringstream os;
  os << c.summary() << "; Spearman " << (rho ? fmt(*rho) : std::string("degenerate")) << "; remaining error at f=0.2 "
     << fmt(ours) << " vs random mean " << fmt(random_sum / 10) << " (" << dominated << "/10 dominated)";
  return {c.ok(), os.str()};
}

Verdict criterion8(const TrainedRun& first, const TrainedRun& second) {
  Checks c;
  c.expect(first.checkpoint_bytes == second.checkpoint_bytes, "rerun checkpoints differ");
  const fs::path dir = fs::temp_directory_path() / "umff_acceptance";
  fs::create_directories(dir);
  checkpoint::save(dir / "a.ckpt", checkpoint::decode(first.checkpoint_bytes));
  checkpoint::save(dir / "b.ckpt", checkpoint::load(dir / "a.ckpt"));
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string{std::istreambuf_iterator<char>(in), {}};
  };
  const std::string a = slurp(dir / "a.ckpt");
  c.expect(a == first.checkpoint_bytes, "saved file equals encoded bytes");
  c.expect(a == slurp(dir / "b.ckpt"), "save/load/save is byte-identical");
  const auto reloaded = checkpoint::instantiate(checkpoint::load(dir / "a.ckpt"));
  c.expect(checkpoint::encode(checkpoint::capture(reloaded)) == checkpoint::encode(checkpoint::capture(first.model)),
           "restored parameters are bit-identical");
  fs::remove_all(dir);
  return {c.ok(), c.summary() + "; checkpoint " + std::to_string(first.checkpoint_bytes.size()) +
                      " bytes; second run " + fmt(second.seconds) + " s"};
}

// ---------------------------------------------------------------- 9

TD random_double_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TD t = TD::zeros({1, 3, h, w});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Verdict criterion9() {
  Checks c;
  const TD zero = TD::zeros({1, 3, 4, 4});
  c.expect(std::isinf(eval::psnr(zero, zero)) && eval::psnr(zero, zero) > 0, "psnr(x, x) = +inf");
  c.expect(rel_err(eval::psnr(zero, TD::filled({1, 3, 4, 4}, 0.01)), 40.0) < 1e-12, "MSE 1e-4 -> 40 dB");
  c.expect(std::abs(eval::psnr(zero, TD::filled({1, 3, 4, 4}, 0.5)) - 6.0206) < 1e-4, "MSE 0.25 -> 6.0206 dB");

  std::mt19937_64 rng(9);
  const TD x = random_double_image(20, 24, rng);
  c.expect(std::abs(eval::ssim(x, x) - 1.0) < 1e-9, "ssim(x, x) = 1");
  TD half = TD::zeros({1, 3, 16, 16});
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 16; ++y)
      for (int xx = 8; xx < 16; ++xx) half.data()[(ch * 16 + y) * 16 + xx] = 1.0;
  TD inverse = TD::zeros(half.shape());
  for (std::size_t i = 0; i < half.numel(); ++i) inverse.data()[i] = 1.0 - half.data()[i];
  c.expect(eval::ssim(half, inverse) < 0.0, "ssim(half, 1 - half) < 0");
  double worst_ssim = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const TD a = random_double_image(24, 20, rng), b = random_double_image(24, 20, rng);
    const auto la = eval::luma(a), lb = eval::luma(b);
    worst_ssim = std::max(worst_ssim, std::abs(eval::ssim(a, b) - testing::oracle_ssim(la, lb, 24, 20)));
  }
  c.expect(worst_ssim < 1e-6, "ssim vs direct formula " + fmt(worst_ssim));

  const std::vector<double> u{0.3, 0.1, 0.9, 0.5, 0.7};
  std::vector<double> rev;
  for (double v : u) rev.push_back(0.9 - v);
  c.expect(std::abs(*eval::spearman(u, u) - 1.0) < 1e-12, "spearman identical = 1");
  c.expect(std::abs(*eval::spearman(u, rev) + 1.0) < 1e-12, "spearman reversal = -1");
  c.expect(!eval::spearman(u, std::vector<double>(5, 0.2)).has_value(), "constant map is degenerate");
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<double> ra(1000), rb(1000);
  for (auto& v : ra) v = ud(rng);
  for (auto& v : rb) v = ud(rng);
  c.expect(std::abs(*eval::spearman(ra, rb) - testing::oracle_spearman(ra, rb)) < 1e-10,
           "spearman vs brute-force oracle");

  const auto full = train::TrainConfig::full_scale();
  c.expect(train::lr_at(full, 0) == 1e-3, "lr(0) = 1e-3");
  c.expect(train::lr_at(full, 50) == 5e-4, "lr(50) = 5e-4");
  c.expect(train::lr_at(full, 100) == 2.5e-4, "lr(100) = 2.5e-4");
  return {c.ok(), c.summary()};
}

// ---------------------------------------------------------------- 10

Verdict criterion10() {
  Checks c;
  const TF img = random_image(64, 10);
  std::map<std::string, double> median;
  for (auto [name, v] : {std::pair{"T", model::Variant::T}, {"B", model::Variant::B}, {"L", model::Variant::L}}) {
    const auto m = model::Model<float>::build(model::ModelConfig::preset(v), 1);
    median[name] = eval::time_inference(m, img, 5).median;
  }
  c.expect(median["T"] < median["B"], "T < B");
  c.expect(median["B"] < median["L"], "B < L");
  return {c.ok(), c.summary() + "; median seconds on 64x64: T " + fmt(median["T"]) + ", B " + fmt(median["B"]) +
                      ", L " + fmt(median["L"])};
}

}  // namespace

int main(int argc, char** argv) {
  umff::diff::retain_freed_memory();
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > 10) {
      std::cerr << "usage: " << argv[0] << " [criterion numbers 1-10 ...]\n";
      return 2;
    }
    selected.insert(n);
  }
  if (selected.empty())
    for (int n = 1; n <= 10; ++n) selected.insert(n);

  int failed = 0;
  const auto report = [&](int n, const char* title, const std::function<Verdict()>& run) {
    if (!selected.contains(n)) return;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << title << "): " << v.detail << std::endl;
  };

  report(1, "closed-form GGD suite", criterion1);
  report(2, "special functions", criterion2);
  report(3, "gradient registry", criterion3);
  report(4, "FFT oracle", criterion4);
  report(5, "architecture", criterion5);

  std::optional<std::vector<data::PairedSample>> pairs;
  std::optional<TrainedRun> first;
  const auto need_run = [&]() -> const TrainedRun& {
    if (!first) {
      pairs = training_pairs();
      first = desk_run(*pairs);
    }
    return *first;
  };
  report(6, "desk-scale learning", [&] { return criterion6(need_run(), *pairs); });
  report(7, "uncertainty calibration", [&] { return criterion7(need_run()); });
  report(8, "determinism", [&] {
    const auto& a = need_run();
    const auto b = desk_run(*pairs);
    return criterion8(a, b);
  });
  report(9, "metric correctness", criterion9);
  report(10, "timing ordering", criterion10);

  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << " (" << selected.size()
            << " criteria)" << std::endl;
  return failed == 0 ? 0 : 1;
}
