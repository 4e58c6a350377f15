#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "umff/params.hpp"

namespace umff::blocks {

/// Init gain for convolutions that close a residual branch.
inline constexpr double kBranchGain = 0.1;

/// Init gain for convolutions not followed by a ReLU (variance-preserving).
inline constexpr double kLinearGain = 0.70710678118654752;

/// Residual block. With a gate it is the residual attention block (RAB):
///   x1 = conv2(relu(conv1(x))),  out = x + x1 * gate(gap(x1)).
/// Without a gate: out = x + x1.
template <typename T>
struct ResidualBlock {
  Conv<T> conv1;
  Conv<T> conv2;
  std::optional<Conv<T>> gate;
  int width() const { return conv1.in_channels(); }
};

template <typename T>
ResidualBlock<T> make_residual_block(ParameterStore<T>& store, const std::string& name, int width,
                                     bool attention, std::mt19937_64& rng);
template <typename T>
Tensor<T> rab_forward(const ResidualBlock<T>& block, const Tensor<T>& x);

/// Supervised feature fusion: S = image_conv(img), out = gate_feat(f) * gate_image(S) + skip(f).
template <typename T>
struct Sffb {
  Conv<T> image_conv;  // 3x3, 3 -> C
  Conv<T> gate_feat;   // 1x1, C -> C
  Conv<T> gate_image;  // 1x1, C -> C
  Conv<T> skip;        // 1x1, C -> C
  int width() const { return gate_feat.in_channels(); }
};

template <typename T>
Sffb<T> make_sffb(ParameterStore<T>& store, const std::string& name, int width, std::mt19937_64& rng);
template <typename T>
Tensor<T> sffb_forward(const Sffb<T>& block, const Tensor<T>& features, const Tensor<T>& rain_image);

/// Encoder features at scales 1, 1/2 and 1/4 with widths C, 2C and 4C.
template <typename T>
using EncoderFeatures = std::array<Tensor<T>, 3>;

/// Multi-scale fusion into one decoder scale. `level` is 0, 1 or 2 for
/// scales 1, 1/2 and 1/4.
template <typename T>
struct Mfb {
  int level = 0;
  Conv<T> fuse;    // 1x1, 7C -> target width
  Conv<T> refine;  // 3x3, target width -> target width
};

template <typename T>
Mfb<T> make_mfb(ParameterStore<T>& store, const std::string& name, int base_width, int level,
                std::mt19937_64& rng);
/// Brings a feature map from scale level `from` to level `to` by repeated
/// 2x average pooling or bilinear upsampling.
template <typename T>
Tensor<T> resize_to_level(const Tensor<T>& x, int from, int to);
template <typename T>
Tensor<T> mfb_forward(const Mfb<T>& block, const EncoderFeatures<T>& enc);

/// Uncertainty head: relu(c1), relu(c2) is the tap, c3 gives one raw channel.
template <typename T>
struct UncertaintyHead {
  Conv<T> conv1;
  Conv<T> conv2;
  Conv<T> conv3;
};

template <typename T>
struct HeadOutput {
  Tensor<T> raw;  // (n, 1, h, w)
  Tensor<T> tap;  // (n, C, h, w)
};

template <typename T>
UncertaintyHead<T> make_uncertainty_head(ParameterStore<T>& store, const std::string& name,
                                         int width, std::mt19937_64& rng, T raw_bias = T(0));
template <typename T>
HeadOutput<T> uncertainty_head_forward(const UncertaintyHead<T>& head, const Tensor<T>& features);

enum class UffbVariant { B1, B2, B3 };

std::string_view uffb_variant_name(UffbVariant v);
/// Accepts "B1", "B2", "B3"; throws std::invalid_argument otherwise.
UffbVariant parse_uffb_variant(std::string_view text);

/// Uncertainty-guided fusion.
///   B3: out = f + fuse(pf(f) + pa(ta) + pb(tb))
///   B2: out = f + fuse(concat(pf(f), pa(ta), pb(tb)))
///   B1: out = f + fuse(concat(f, ta, tb))
template <typename T>
struct Uffb {
  UffbVariant variant = UffbVariant::B3;
  std::optional<Conv<T>> proj_f;
  std::optional<Conv<T>> proj_alpha;
  std::optional<Conv<T>> proj_beta;
  Conv<T> fuse;
};

template <typename T>
Uffb<T> make_uffb(ParameterStore<T>& store, const std::string& name, int width, UffbVariant variant,
                  std::mt19937_64& rng);
template <typename T>
Tensor<T> uffb_forward(const Uffb<T>& block, const Tensor<T>& f, const Tensor<T>& alpha_tap,
                       const Tensor<T>& beta_tap);

}  // namespace umff::blocks
