#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "umff/blocks.hpp"
#include "umff/ggd.hpp"
#include "umff/params.hpp"
#include "umff/pyramid.hpp"

namespace umff::model {

enum class Variant { T, B, L, Custom };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view text);

struct ModelConfig {
  Variant variant = Variant::T;
  int base_blocks = 1;
  int base_channels = 32;
  bool enable_uncertainty = true;
  bool enable_uffb = true;
  bool enable_sffb = true;
  bool enable_mfb = true;
  bool use_rab = true;
  blocks::UffbVariant uffb_variant = blocks::UffbVariant::B3;

  static ModelConfig preset(Variant v);

  /// Throws std::invalid_argument describing the first violated rule.
  void validate() const;

  /// Sets one field from its textual key=value form. Returns false for an
  /// unknown key; throws std::invalid_argument for a malformed value.
  bool set(std::string_view key, std::string_view value);

  /// Newline-separated key=value lines, parseable by from_record.
  std::string to_record() const;
  static ModelConfig from_record(std::string_view text);

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ModelOutput {
  Pyramid<T> derained;
  std::optional<ggd::ParamMaps<T>> params;  // present when uncertainty is enabled
  Tensor<T> uncertainty;                    // undefined when uncertainty is disabled
  std::vector<std::string> invoked;         // block instances run, in order
};

struct SummaryRow {
  std::string name;
  std::vector<int> dims;
  std::size_t count = 0;
};

template <typename T>
class Model {
 public:
  static Model build(const ModelConfig& config, std::uint64_t seed);

  /// `input` is (n, 3, H, W) with H and W positive multiples of 4.
  ModelOutput<T> forward(const Tensor<T>& input) const;

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& params() { return store_; }
  const ParameterStore<T>& params() const { return store_; }

  std::size_t count_params() const { return store_.total_count(); }
  std::vector<SummaryRow> summary_rows() const;
  std::string summarize() const;

  /// Output heads, exposed so callers can zero them.
  const std::array<Conv<T>, 3>& output_heads() const { return heads_; }
  std::array<Conv<T>, 3>& output_heads() { return heads_; }

 private:
  using Stage = std::vector<blocks::ResidualBlock<T>>;

  Tensor<T> run_stage(const Stage& stage, const std::string& name, Tensor<T> x,
                      std::vector<std::string>& invoked) const;

  ModelConfig config_;
  ParameterStore<T> store_;
  Conv<T> stem_;
  std::array<Stage, 3> enc_;
  std::array<Stage, 3> dec_;
  std::array<Conv<T>, 2> down_;  // level k -> k+1
  std::array<Conv<T>, 2> up_;    // level k+1 -> k, 1x1 before upsampling
  std::array<std::optional<blocks::Sffb<T>>, 2> sffb_;  // at levels 1 and 2
  std::array<std::optional<blocks::Mfb<T>>, 3> mfb_;
  std::array<Conv<T>, 3> heads_;
  std::optional<blocks::UncertaintyHead<T>> alpha_head_;
  std::optional<blocks::UncertaintyHead<T>> beta_head_;
  std::optional<blocks::Uffb<T>> uffb_;
};

/// Throws std::invalid_argument if `input` is not a (n, 3, H, W) batch with
/// H and W positive multiples of 4.
void check_input_shape(const diff::Shape& shape);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace umff::model
