#include "umff/blocks.hpp"

#include <stdexcept>

namespace umff::blocks {

namespace d = umff::diff;

namespace {

template <typename T>
void require_channels(const Tensor<T>& x, int expected, const char* where) {
  if (x.shape().c != expected) {
    throw std::invalid_argument(std::string(where) + ": expected " + std::to_string(expected) +
                                " channels, got " + std::to_string(x.shape().c) + " in " +
                                x.shape().str());
  }
}

template <typename T>
void require_spatial_match(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw std::invalid_argument(std::string(where) + ": inputs " + sa.str() + " and " + sb.str() +
                                " are not spatially aligned");
  }
}

}  // namespace

template <typename T>
ResidualBlock<T> make_residual_block(ParameterStore<T>& store, const std::string& name, int width,
                                     bool attention, std::mt19937_64& rng) {
  ResidualBlock<T> b;
  b.conv1 = make_conv(store, name + ".conv1", width, width, 3, rng);
  b.conv2 = make_conv(store, name + ".conv2", width, width, 3, rng, 1, kBranchGain);
  if (attention) b.gate = make_conv(store, name + ".gate", width, width, 1, rng, 1, kLinearGain);
  return b;
}

template <typename T>
Tensor<T> rab_forward(const ResidualBlock<T>& block, const Tensor<T>& x) {
  require_channels(x, block.width(), "rab_forward");
  Tensor<T> x1 = block.conv2(d::relu(block.conv1(x)));
  if (!block.gate) return d::add(x, x1);
  Tensor<T> g = (*block.gate)(d::global_avg_pool(x1));
  return d::add(x, d::mul(x1, g));
}

template <typename T>
Sffb<T> make_sffb(ParameterStore<T>& store, const std::string& name, int width, std::mt19937_64& rng) {
  Sffb<T> b;
  b.image_conv = make_conv(store, name + ".image_conv", 3, width, 3, rng, 1, kLinearGain);
  b.gate_feat = make_conv(store, name + ".gate_feat", width, width, 1, rng, 1, kLinearGain);
  b.gate_image = make_conv(store, name + ".gate_image", width, width, 1, rng, 1, kBranchGain);
  b.skip = make_conv(store, name + ".skip", width, width, 1, rng, 1, kLinearGain);
  return b;
}

template <typename T>
Tensor<T> sffb_forward(const Sffb<T>& block, const Tensor<T>& features, const Tensor<T>& rain_image) {
  require_channels(features, block.width(), "sffb_forward");
  require_channels(rain_image, 3, "sffb_forward image");
  require_spatial_match(features, rain_image, "sffb_forward");
  Tensor<T> s = block.image_conv(rain_image);
  Tensor<T> gated = d::mul(block.gate_feat(features), block.gate_image(s));
  return d::add(gated, block.skip(features));
}

template <typename T>
Mfb<T> make_mfb(ParameterStore<T>& store, const std::string& name, int base_width, int level,
                std::mt19937_64& rng) {
  if (level < 0 || level > 2) throw std::invalid_argument("make_mfb: level must be 0, 1 or 2");
  const int target = base_width << level;
  Mfb<T> b;
  b.level = level;
  b.fuse = make_conv(store, name + ".fuse", 7 * base_width, target, 1, rng, 1, kLinearGain);
  b.refine = make_conv(store, name + ".refine", target, target, 3, rng, 1, kBranchGain);
  return b;
}

template <typename T>
Tensor<T> resize_to_level(const Tensor<T>& x, int from, int to) {
  Tensor<T> y = x;
  for (int l = from; l < to; ++l) y = d::downsample_avg2(y);
  for (int l = from; l > to; --l) y = d::upsample_bilinear2(y);
  return y;
}

template <typename T>
Tensor<T> mfb_forward(const Mfb<T>& block, const EncoderFeatures<T>& enc) {
  const int base = block.fuse.in_channels() / 7;
  const auto& s0 = enc[0].shape();
  for (int k = 0; k < 3; ++k) {
    const auto& s = enc[k].shape();
    if (s.n != s0.n) {
      throw std::invalid_argument("mfb_forward: encoder batch sizes differ (" + s0.str() + " vs " +
                                  s.str() + ")");
    }
    require_channels(enc[k], base << k, "mfb_forward");
    if (s.h << k != s0.h || s.w << k != s0.w) {
      throw std::invalid_argument("mfb_forward: encoder feature " + std::to_string(k) + " " +
                                  s.str() + " is not at scale 1/" + std::to_string(1 << k) +
                                  " of " + s0.str());
    }
  }
  std::vector<Tensor<T>> parts;
  parts.reserve(3);
  for (int k = 0; k < 3; ++k) parts.push_back(resize_to_level(enc[k], k, block.level));
  return block.refine(block.fuse(d::concat_channels(parts)));
}

template <typename T>
UncertaintyHead<T> make_uncertainty_head(ParameterStore<T>& store, const std::string& name,
                                         int width, std::mt19937_64& rng, T raw_bias) {
  UncertaintyHead<T> h;
  h.conv1 = make_conv(store, name + ".conv1", width, width, 3, rng);
  h.conv2 = make_conv(store, name + ".conv2", width, width, 3, rng);
  h.conv3 = make_conv(store, name + ".conv3", width, 1, 3, rng, 1, kBranchGain);
  h.conv3.bias.data()[0] = raw_bias;
  return h;
}

template <typename T>
HeadOutput<T> uncertainty_head_forward(const UncertaintyHead<T>& head, const Tensor<T>& features) {
  require_channels(features, head.conv1.in_channels(), "uncertainty_head_forward");
  Tensor<T> tap = d::relu(head.conv2(d::relu(head.conv1(features))));
  return HeadOutput<T>{head.conv3(tap), tap};
}

std::string_view uffb_variant_name(UffbVariant v) {
  switch (v) {
    case UffbVariant::B1: return "B1";
    case UffbVariant::B2: return "B2";
    case UffbVariant::B3: return "B3";
  }
  return "?";
}

UffbVariant parse_uffb_variant(std::string_view text) {
  if (text == "B1") return UffbVariant::B1;
  if (text == "B2") return UffbVariant::B2;
  if (text == "B3") return UffbVariant::B3;
  throw std::invalid_argument("unknown UFFB variant '" + std::string(text) +
                              "' (expected B1, B2 or B3)");
}

template <typename T>
Uffb<T> make_uffb(ParameterStore<T>& store, const std::string& name, int width, UffbVariant variant,
                  std::mt19937_64& rng) {
  Uffb<T> b;
  b.variant = variant;
  switch (variant) {
    case UffbVariant::B3:
    case UffbVariant::B2:
      b.proj_f = make_conv(store, name + ".proj_f", width, width, 1, rng, 1, kLinearGain);
      b.proj_alpha = make_conv(store, name + ".proj_alpha", width, width, 1, rng, 1, kLinearGain);
      b.proj_beta = make_conv(store, name + ".proj_beta", width, width, 1, rng, 1, kLinearGain);
      break;
    case UffbVariant::B1:
      break;
    default:
      throw std::invalid_argument("make_uffb: unknown variant");
  }
  const int fuse_in = variant == UffbVariant::B3 ? width : 3 * width;
  b.fuse = make_conv(store, name + ".fuse", fuse_in, width, 1, rng, 1, kBranchGain);
  return b;
}

template <typename T>
Tensor<T> uffb_forward(const Uffb<T>& block, const Tensor<T>& f, const Tensor<T>& alpha_tap,
                       const Tensor<T>& beta_tap) {
  require_spatial_match(f, alpha_tap, "uffb_forward");
  require_spatial_match(f, beta_tap, "uffb_forward");
  const int width = block.fuse.out_channels();
  require_channels(f, width, "uffb_forward");
  Tensor<T> fused;
  switch (block.variant) {
    case UffbVariant::B3:
      fused = d::add(d::add((*block.proj_f)(f), (*block.proj_alpha)(alpha_tap)),
                     (*block.proj_beta)(beta_tap));
      break;
    case UffbVariant::B2:
      fused = d::concat_channels<T>(
          {(*block.proj_f)(f), (*block.proj_alpha)(alpha_tap), (*block.proj_beta)(beta_tap)});
      break;
    case UffbVariant::B1:
      fused = d::concat_channels<T>({f, alpha_tap, beta_tap});
      break;
    default:
      throw std::invalid_argument("uffb_forward: unknown variant");
  }
  return d::add(f, block.fuse(fused));
}

#define UMFF_INSTANTIATE_BLOCKS(T)                                                                 \
  template ResidualBlock<T> make_residual_block<T>(ParameterStore<T>&, const std::string&, int,   \
                                                   bool, std::mt19937_64&);                        \
  template Tensor<T> rab_forward<T>(const ResidualBlock<T>&, const Tensor<T>&);                    \
  template Sffb<T> make_sffb<T>(ParameterStore<T>&, const std::string&, int, std::mt19937_64&);    \
  template Tensor<T> sffb_forward<T>(const Sffb<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Mfb<T> make_mfb<T>(ParameterStore<T>&, const std::string&, int, int, std::mt19937_64&); \
  template Tensor<T> resize_to_level<T>(const Tensor<T>&, int, int);                               \
  template Tensor<T> mfb_forward<T>(const Mfb<T>&, const EncoderFeatures<T>&);                     \
  template UncertaintyHead<T> make_uncertainty_head<T>(ParameterStore<T>&, const std::string&,     \
                                                       int, std::mt19937_64&, T);                  \
  template HeadOutput<T> uncertainty_head_forward<T>(const UncertaintyHead<T>&, const Tensor<T>&); \
  template Uffb<T> make_uffb<T>(ParameterStore<T>&, const std::string&, int, UffbVariant,          \
                                std::mt19937_64&);                                                 \
  template Tensor<T> uffb_forward<T>(const Uffb<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                     const Tensor<T>&);

UMFF_INSTANTIATE_BLOCKS(float)
UMFF_INSTANTIATE_BLOCKS(double)

}  // namespace umff::blocks
