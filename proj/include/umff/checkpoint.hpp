#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "umff/model.hpp"

namespace umff::checkpoint {

// Layout, all integers little-endian:
//   "UMFF" | u32 version | u32 record length | config record (key=value text)
//   | u32 parameter count | per parameter: u32 name length, name, u32 rank,
//     u32 dims..., u32 dtype (0 = float32), float32 values
//   | optional optimizer section: "ADAM" | u64 step | per parameter: float32 m
//     values then float32 v values, in parameter order.
inline constexpr char kMagic[4] = {'U', 'M', 'F', 'F'};
inline constexpr char kOptimizerTag[4] = {'A', 'D', 'A', 'M'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 0;

struct ParamRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;  // first moments, one per parameter
  std::vector<std::vector<float>> v;  // second moments
  bool operator==(const OptimizerState&) const = default;
};

struct Checkpoint {
  model::ModelConfig config;
  std::vector<ParamRecord> params;
  std::optional<OptimizerState> optimizer;
};

/// Decoding failure at a byte offset.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

std::string encode(const Checkpoint& ckpt);
Checkpoint decode(std::string_view bytes);

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

/// Snapshot of a model's parameters, with optional optimizer state.
Checkpoint capture(const model::Model<float>& model, const OptimizerState* optimizer = nullptr);

/// Copies parameters into `model`. Throws std::runtime_error naming the first
/// parameter whose name or dims disagree.
void restore(model::Model<float>& model, const Checkpoint& ckpt);

/// Builds a model from the stored config and restores its parameters.
model::Model<float> instantiate(const Checkpoint& ckpt);

}  // namespace umff::checkpoint
