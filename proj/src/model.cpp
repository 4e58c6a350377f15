#include "umff/model.hpp"

#include <charconv>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace umff::model {

namespace d = umff::diff;

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::T: return "T";
    case Variant::B: return "B";
    case Variant::L: return "L";
    case Variant::Custom: return "custom";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  if (text == "T") return Variant::T;
  if (text == "B") return Variant::B;
  if (text == "L") return Variant::L;
  if (text == "custom") return Variant::Custom;
  throw std::invalid_argument("unknown variant '" + std::string(text) +
                              "' (expected T, B, L or custom)");
}

namespace {

int preset_blocks(Variant v) {
  switch (v) {
    case Variant::T: return 1;
    case Variant::B: return 10;
    case Variant::L: return 20;
    case Variant::Custom: break;
  }
  return 0;
}

constexpr int kPresetChannels = 32;

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key " + std::string(key) + ": expected true or false, got '" +
                              std::string(v) + "'");
}

int parse_positive(std::string_view key, std::string_view v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || out <= 0) {
    throw std::invalid_argument("config key " + std::string(key) +
                                ": expected a positive integer, got '" + std::string(v) + "'");
  }
  return out;
}

}  // namespace

ModelConfig ModelConfig::preset(Variant v) {
  ModelConfig c;
  c.variant = v;
  if (v != Variant::Custom) {
    c.base_blocks = preset_blocks(v);
    c.base_channels = kPresetChannels;
  }
  return c;
}

void ModelConfig::validate() const {
  if (base_blocks <= 0) throw std::invalid_argument("base_blocks must be positive");
  if (base_channels <= 0) throw std::invalid_argument("base_channels must be positive");
  if (variant != Variant::Custom) {
    if (base_blocks != preset_blocks(variant) || base_channels != kPresetChannels) {
      throw std::invalid_argument("variant " + std::string(variant_name(variant)) +
                                  " requires base_blocks=" + std::to_string(preset_blocks(variant)) +
                                  " and base_channels=" + std::to_string(kPresetChannels) +
                                  "; use variant=custom to override");
    }
  }
  if (enable_uffb && !enable_uncertainty) {
    throw std::invalid_argument("enable_uffb requires enable_uncertainty");
  }
}

bool ModelConfig::set(std::string_view key, std::string_view value) {
  if (key == "variant") {
    const Variant v = parse_variant(value);
    variant = v;
    if (v != Variant::Custom) {
      base_blocks = preset_blocks(v);
      base_channels = kPresetChannels;
    }
  } else if (key == "base_blocks") {
    base_blocks = parse_positive(key, value);
  } else if (key == "base_channels") {
    base_channels = parse_positive(key, value);
  } else if (key == "enable_uncertainty") {
    enable_uncertainty = parse_bool(key, value);
  } else if (key == "enable_uffb") {
    enable_uffb = parse_bool(key, value);
  } else if (key == "enable_sffb") {
    enable_sffb = parse_bool(key, value);
  } else if (key == "enable_mfb") {
    enable_mfb = parse_bool(key, value);
  } else if (key == "use_rab") {
    use_rab = parse_bool(key, value);
  } else if (key == "uffb_variant") {
    uffb_variant = blocks::parse_uffb_variant(value);
  } else {
    return false;
  }
  return true;
}

std::string ModelConfig::to_record() const {
  std::ostringstream os;
  os << std::boolalpha;
  os << "variant=" << variant_name(variant) << '\n'
     << "base_blocks=" << base_blocks << '\n'
     << "base_channels=" << base_channels << '\n'
     << "enable_uncertainty=" << enable_uncertainty << '\n'
     << "enable_uffb=" << enable_uffb << '\n'
     << "enable_sffb=" << enable_sffb << '\n'
     << "enable_mfb=" << enable_mfb << '\n'
     << "use_rab=" << use_rab << '\n'
     << "uffb_variant=" << blocks::uffb_variant_name(uffb_variant) << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_record(std::string_view text) {
  ModelConfig c;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("model config record: malformed line '" + std::string(line) + "'");
    }
    if (!c.set(line.substr(0, eq), line.substr(eq + 1))) {
      throw std::invalid_argument("model config record: unknown key '" +
                                  std::string(line.substr(0, eq)) + "'");
    }
  }
  c.validate();
  return c;
}

void check_input_shape(const diff::Shape& s) {
  if (s.c != 3) {
    throw std::invalid_argument("model input must have 3 channels, got " + s.str());
  }
  if (s.h <= 0 || s.w <= 0 || s.h % 4 != 0 || s.w % 4 != 0) {
    throw std::invalid_argument("model input height and width must be positive multiples of 4, got " +
                                std::to_string(s.h) + "x" + std::to_string(s.w));
  }
}

template <typename T>
Model<T> Model<T>::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  auto& st = m.store_;
  const int c = config.base_channels;
  const int n = config.base_blocks;
  const int widths[3] = {c, 2 * c, 4 * c};
  const int enc_blocks[3] = {n, n, 2 * n};
  const char* block_tag = config.use_rab ? ".rab" : ".res";

  auto make_stage = [&](const std::string& name, int width, int count) {
    Stage s;
    for (int i = 0; i < count; ++i) {
      s.push_back(blocks::make_residual_block(st, name + block_tag + std::to_string(i), width,
                                              config.use_rab, rng));
    }
    return s;
  };

  m.stem_ = make_conv(st, "stem1", 3, c, 3, rng, 1, blocks::kLinearGain);
  for (int k = 0; k < 3; ++k) {
    if (k > 0) {
      m.down_[k - 1] = make_conv(st, "down" + std::to_string(k + 1), widths[k - 1], widths[k], 3, rng, 2,
                                 blocks::kLinearGain);
      if (config.enable_sffb) {
        m.sffb_[k - 1] = blocks::make_sffb(st, "sffb" + std::to_string(k + 1), widths[k], rng);
      }
    }
    m.enc_[k] = make_stage("enc" + std::to_string(k + 1), widths[k], enc_blocks[k]);
  }
  if (config.enable_mfb) {
    for (int k = 0; k < 3; ++k) m.mfb_[k] = blocks::make_mfb(st, "mfb" + std::to_string(k + 1), c, k, rng);
  }
  for (int k = 2; k >= 0; --k) {
    if (k < 2) m.up_[k] = make_conv(st, "up" + std::to_string(k + 2), widths[k + 1], widths[k], 1, rng, 1,
                                     blocks::kLinearGain);
    m.dec_[k] = make_stage("dec" + std::to_string(k + 1), widths[k], n);
  }
  for (int k = 0; k < 3; ++k) m.heads_[k] = make_conv(st, "head" + std::to_string(k + 1), widths[k], 3, 3, rng, 1,
                                blocks::kBranchGain);
  if (config.enable_uncertainty) {
    m.alpha_head_ = blocks::make_uncertainty_head(st, "ue_alpha", c, rng, T(0));
    m.beta_head_ = blocks::make_uncertainty_head(st, "ue_beta", c, rng,
                                                 static_cast<T>(ggd::raw_beta_for(ggd::kInitialBeta)));
  }
  if (config.enable_uffb) m.uffb_ = blocks::make_uffb(st, "uffb", c, config.uffb_variant, rng);
  return m;
}

template <typename T>
Tensor<T> Model<T>::run_stage(const Stage& stage, const std::string& name, Tensor<T> x,
                              std::vector<std::string>& invoked) const {
  const char* tag = config_.use_rab ? ".rab" : ".res";
  for (std::size_t i = 0; i < stage.size(); ++i) {
    invoked.push_back(name + tag + std::to_string(i));
    x = blocks::rab_forward(stage[i], x);
  }
  return x;
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Tensor<T>& input) const {
  check_input_shape(input.shape());
  ModelOutput<T> out;
  auto& invoked = out.invoked;
  const Pyramid<T> images = make_pyramid(input);

  blocks::EncoderFeatures<T> enc;
  invoked.push_back("stem1");
  Tensor<T> h = stem_(images[0]);
  for (int k = 0; k < 3; ++k) {
    if (k > 0) {
      invoked.push_back("down" + std::to_string(k + 1));
      h = down_[k - 1](h);
      if (sffb_[k - 1]) {
        invoked.push_back("sffb" + std::to_string(k + 1));
        h = blocks::sffb_forward(*sffb_[k - 1], h, images[k]);
      }
    }
    h = run_stage(enc_[k], "enc" + std::to_string(k + 1), h, invoked);
    enc[k] = h;
  }

  std::array<Tensor<T>, 3> dec;
  for (int k = 2; k >= 0; --k) {
    Tensor<T> x;
    Tensor<T> skip = enc[k];
    if (mfb_[k]) {
      invoked.push_back("mfb" + std::to_string(k + 1));
      skip = blocks::mfb_forward(*mfb_[k], enc);
    }
    if (k == 2) {
      x = mfb_[k] ? d::add(enc[k], skip) : enc[k];
    } else {
      invoked.push_back("up" + std::to_string(k + 2));
      x = d::add(d::upsample_bilinear2(up_[k](dec[k + 1])), skip);
    }
    dec[k] = run_stage(dec_[k], "dec" + std::to_string(k + 1), x, invoked);
  }

  Tensor<T> top = dec[0];
  if (alpha_head_) {
    invoked.push_back("ue_alpha");
    const auto ha = blocks::uncertainty_head_forward(*alpha_head_, dec[0]);
    invoked.push_back("ue_beta");
    const auto hb = blocks::uncertainty_head_forward(*beta_head_, dec[0]);
    out.params = ggd::param_transform(ha.raw, hb.raw);
    out.uncertainty = ggd::uncertainty_map(*out.params);
    if (uffb_) {
      invoked.push_back("uffb");
      top = blocks::uffb_forward(*uffb_, dec[0], ha.tap, hb.tap);
    }
  }
  for (int k = 2; k >= 0; --k) {
    invoked.push_back("head" + std::to_string(k + 1));
    out.derained[k] = d::add(images[k], heads_[k](k == 0 ? top : dec[k]));
  }
  return out;
}

template <typename T>
std::vector<SummaryRow> Model<T>::summary_rows() const {
  std::vector<SummaryRow> rows;
  rows.reserve(store_.size());
  for (const auto& e : store_.entries()) rows.push_back({e.name, e.dims, e.tensor.numel()});
  return rows;
}

template <typename T>
std::string Model<T>::summarize() const {
  std::ostringstream os;
  os << "UMFFNet-" << variant_name(config_.variant) << "  N=" << config_.base_blocks
     << "  C=" << config_.base_channels << '\n';
  os << std::left << std::setw(36) << "parameter" << std::setw(20) << "shape" << std::right
     << std::setw(10) << "count" << '\n';
  for (const auto& r : summary_rows()) {
    std::string dims;
    for (std::size_t i = 0; i < r.dims.size(); ++i) dims += (i ? "x" : "") + std::to_string(r.dims[i]);
    os << std::left << std::setw(36) << r.name << std::setw(20) << dims << std::right << std::setw(10)
       << r.count << '\n';
  }
  os << "total " << count_params() << '\n';
  return os.str();
}

template class Model<float>;
template class Model<double>;

}  // namespace umff::model
