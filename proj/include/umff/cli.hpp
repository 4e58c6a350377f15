#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "umff/diff/tensor.hpp"

namespace umff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one subcommand. `args` excludes the program name. Help and usage
/// text go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Single-plane float map: "UMAP\n<width> <height>\n" followed by
/// width * height float32 little-endian values in row-major order.
struct FloatMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
};

/// Averages the channels of a (1, c, H, W) tensor into one plane.
FloatMap to_float_map(const diff::Tensor<float>& t);
void write_umap(const std::filesystem::path& path, const FloatMap& map);
FloatMap read_umap(const std::filesystem::path& path);

/// Min-max normalized (1, 1, H, W) preview; a constant map becomes all zeros.
diff::Tensor<float> preview(const FloatMap& map);

}  // namespace umff::cli
