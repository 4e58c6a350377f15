#include "umff/train.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "umff/eval.hpp"

namespace umff::train {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(std::string_view key, std::string_view value) {
  N out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, r.ptr);
}

}  // namespace

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.epochs = 300;
  c.batch_size = 8;
  c.crop = 256;
  c.lr_decay_every = 50;
  return c;
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + msg);
  };
  need(epochs > 0, "epochs must be positive");
  need(batch_size > 0, "batch_size must be positive");
  need(initial_lr >= 0.0 && std::isfinite(initial_lr), "initial_lr must be finite and non-negative");
  need(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0, "lr_decay_factor must be in (0, 1]");
  need(lr_decay_every > 0, "lr_decay_every must be positive");
  need(crop > 0 && crop % 4 == 0, "crop must be a positive multiple of 4");
  need(weights.lambda_fre >= 0.0 && weights.lambda_ue >= 0.0, "loss weights must be non-negative");
  need(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  need(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  need(adam_eps > 0.0, "adam_eps must be positive");
  need(clip_norm >= 0.0, "clip_norm must be non-negative");
  need(max_steps >= 0, "max_steps must be non-negative");
}

bool TrainConfig::set(std::string_view key, std::string_view value) {
  if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "initial_lr") initial_lr = parse_number<double>(key, value);
  else if (key == "lr_decay_factor") lr_decay_factor = parse_number<double>(key, value);
  else if (key == "lr_decay_every") lr_decay_every = parse_number<int>(key, value);
  else if (key == "crop") crop = parse_number<int>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "lambda_fre") weights.lambda_fre = parse_number<double>(key, value);
  else if (key == "lambda_ue") weights.lambda_ue = parse_number<double>(key, value);
  else if (key == "adam_beta1") adam_beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") adam_beta2 = parse_number<double>(key, value);
  else if (key == "adam_eps") adam_eps = parse_number<double>(key, value);
  else if (key == "clip_norm") clip_norm = parse_number<double>(key, value);
  else if (key == "max_steps") max_steps = parse_number<int>(key, value);
  else return false;
  return true;
}

std::string TrainConfig::to_record() const {
  std::ostringstream os;
  os << "epochs=" << epochs << '\n'
     << "batch_size=" << batch_size << '\n'
     << "initial_lr=" << fmt(initial_lr) << '\n'
     << "lr_decay_factor=" << fmt(lr_decay_factor) << '\n'
     << "lr_decay_every=" << lr_decay_every << '\n'
     << "crop=" << crop << '\n'
     << "seed=" << seed << '\n'
     << "lambda_fre=" << fmt(weights.lambda_fre) << '\n'
     << "lambda_ue=" << fmt(weights.lambda_ue) << '\n'
     << "adam_beta1=" << fmt(adam_beta1) << '\n'
     << "adam_beta2=" << fmt(adam_beta2) << '\n'
     << "adam_eps=" << fmt(adam_eps) << '\n'
     << "clip_norm=" << fmt(clip_norm) << '\n'
     << "max_steps=" << max_steps << '\n';
  return os.str();
}

double lr_at(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
  return config.initial_lr * std::pow(config.lr_decay_factor, epoch / config.lr_decay_every);
}

std::string RunConfig::to_record() const { return model.to_record() + train.to_record(); }

RunConfig parse_config(std::string_view text, RunConfig base) {
  RunConfig rc = std::move(base);
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    try {
      if (!rc.train.set(key, value) && !rc.model.set(key, value)) {
        throw std::invalid_argument("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  rc.model.validate();
  rc.train.validate();
  return rc;
}

RunConfig load_config(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), {}};
  return parse_config(text, std::move(base));
}

double clip_gradients(ParameterStore<float>& store, double max_norm) {
  double sq = 0.0;
  for (const auto& e : store.entries()) {
    if (!e.tensor.has_grad()) continue;
    for (float g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& e : store.entries()) {
      if (!e.tensor.has_grad()) continue;
      for (float& g : e.tensor.grad()) g *= s;
    }
  }
  return norm;
}

Adam::Adam(ParameterStore<float>& store, double beta1, double beta2, double eps)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& e : store.entries()) {
    state_.m.emplace_back(e.tensor.numel(), 0.0f);
    state_.v.emplace_back(e.tensor.numel(), 0.0f);
  }
}

void Adam::step(double lr) {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  auto& entries = store_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& tensor = entries[i].tensor;
    if (!tensor.has_grad()) continue;
    auto p = tensor.data();
    auto g = tensor.grad();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = beta1_ * m[j] + (1.0 - beta1_) * gj;
      const double vj = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + eps_);
      p[j] = static_cast<float>(static_cast<double>(p[j]) - update);
    }
  }
}

void Adam::load_state(const checkpoint::OptimizerState& state) {
  const auto& entries = store_->entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw std::invalid_argument("Adam: state covers " + std::to_string(state.m.size()) + " parameters, store has " +
                                std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (state.m[i].size() != entries[i].tensor.numel() || state.v[i].size() != entries[i].tensor.numel()) {
      throw std::invalid_argument("Adam: moment size mismatch for " + entries[i].name);
    }
  }
  state_ = state;
}

std::string StepMetrics::line() const {
  std::ostringstream os;
  os << std::setprecision(9) << "step=" << step << " epoch=" << epoch << " lr=" << lr << " l_con=" << l_con
     << " l_fre=" << l_fre << " l_ue=" << l_ue << " l_total=" << l_total;
  return os.str();
}

NonFiniteLossError::NonFiniteLossError(const StepMetrics& metrics, std::uint64_t input_hash,
                                       const std::string& cause)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "non-finite loss at " << metrics.line() << " input_hash=" << std::hex << std::setw(16)
           << std::setfill('0') << input_hash;
        if (!cause.empty()) os << " cause=" << cause;
        return os.str();
      }()),
      metrics_(metrics),
      input_hash_(input_hash) {}

std::uint64_t hash_values(const diff::Tensor<float>& t) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data().data());
  for (std::size_t i = 0; i < t.numel() * sizeof(float); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

double validation_psnr(const model::Model<float>& model, const std::vector<data::PairedSample>& samples) {
  double total = 0.0;
  for (const auto& s : samples) total += eval::psnr(model.forward(s.rainy).derained[0], s.clean);
  return total / static_cast<double>(samples.size());
}

}  // namespace

TrainResult train(model::Model<float>& model, const std::vector<data::PairedSample>& dataset,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  model.config().validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (options.validation && options.validation->empty()) throw std::invalid_argument("train: empty validation set");

  const std::size_t n = dataset.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  const std::size_t steps_per_epoch = n / batch;

  auto& store = model.params();
  Adam adam(store, config.adam_beta1, config.adam_beta2, config.adam_eps);

  std::ofstream metrics_log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    metrics_log.open(options.out_dir / "metrics.log", std::ios::trunc);
    if (!metrics_log) throw std::runtime_error("train: cannot write " + (options.out_dir / "metrics.log").string());
  }

  TrainResult result;
  result.best_validation_psnr = -std::numeric_limits<double>::infinity();
  auto write_checkpoints = [&]() {
    if (options.out_dir.empty()) return;
    const auto ckpt = checkpoint::capture(model, &adam.state());
    checkpoint::save(options.out_dir / "last.ckpt", ckpt);
    if (options.validation) {
      const double v = validation_psnr(model, *options.validation);
      if (v > result.best_validation_psnr) {
        result.best_validation_psnr = v;
        checkpoint::save(options.out_dir / "best.ckpt", ckpt);
      }
    }
  };

  bool stop = false;
  for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    const auto order = data::epoch_order(n, config.seed, epoch);
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0xa06u};
    std::mt19937_64 aug_rng(seq);
    const double lr = lr_at(config, epoch);

    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      if (config.max_steps > 0 && result.steps >= config.max_steps) {
        stop = true;
        break;
      }
      std::vector<data::Image> rainy, clean;
      for (std::size_t k = 0; k < batch; ++k) {
        const auto s = data::augment(dataset[order[b * batch + k]], config.crop, aug_rng);
        rainy.push_back(s.rainy);
        clean.push_back(s.clean);
      }
      const diff::Tensor<float> input = data::stack(rainy);
      const Pyramid<float> target = make_pyramid(data::stack(clean));

      StepMetrics m;
      m.step = result.steps;
      m.epoch = epoch;
      m.lr = lr;
      m.l_con = m.l_fre = m.l_ue = m.l_total = std::numeric_limits<double>::quiet_NaN();
      try {
        diff::Tape<float> tape;
        diff::TapeScope<float> scope(tape);
        const auto out = model.forward(input);
        auto rep = loss::total_loss(out, target, config.weights);
        m.l_con = rep.l_con.item();
        m.l_fre = rep.l_fre.item();
        m.l_ue = rep.l_ue.item();
        m.l_total = rep.l_total.item();
        if (!std::isfinite(m.l_total)) throw NonFiniteLossError(m, hash_values(input));
        diff::backward(rep.l_total, tape);
      } catch (const diff::NonFiniteError& e) {
        throw NonFiniteLossError(m, hash_values(input), e.what());
      }
      clip_gradients(store, config.clip_norm);
      adam.step(lr);
      store.zero_grad();

      ++result.steps;
      if (metrics_log) metrics_log << m.line() << '\n' << std::flush;
      if (options.on_step) options.on_step(m);
      result.log.push_back(m);
    }
    if (!stop) {
      ++result.epochs_completed;
      write_checkpoints();
    }
  }
  if (stop) write_checkpoints();
  result.optimizer = adam.state();
  return result;
}

}  // namespace umff::train
