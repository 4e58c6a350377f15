#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "umff/diff/tensor.hpp"
#include "umff/pyramid.hpp"

namespace umff::data {

/// (1, c, H, W) with values in [0, 1]; c is 3 for colour and 1 for grayscale.
using Image = diff::Tensor<float>;

/// Reads an 8-bit PNG as RGB in [0, 1]. Gray and palette inputs are expanded,
/// alpha is dropped, 16-bit samples are rejected.
Image read_png(const std::filesystem::path& path);

/// Writes channel values clamped to [0, 1] and rounded to 8 bits. One channel
/// gives a grayscale file, three give RGB.
void write_png(const std::filesystem::path& path, const Image& image);

struct RainSpec {
  double streak_density = 0.01;  // fraction of seed pixels, in (0, 1]
  int streak_length = 11;        // pixels, at least 2
  double angle_range = 20.0;     // degrees either side of vertical, in [0, 90]
  double intensity = 0.6;        // in [0, 1]
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct PairedSample {
  Image rainy;
  Image clean;
  std::string id;
};

/// Line kernel of odd size covering `length` pixels along `angle_deg` from
/// vertical, normalized to a peak of 1.
std::vector<float> line_kernel(int length, double angle_deg, int* size);

/// Adds seeded streaks to `clean` and clips to [0, 1]. Pure in (clean, spec).
PairedSample synthesize_rain(const Image& clean, const RainSpec& spec, std::string id = {});

enum class Pattern { Gradient, Checkerboard, Texture };

std::string_view pattern_name(Pattern p);

/// Deterministic procedural clean image of size x size.
Image procedural_clean(Pattern pattern, int size, std::uint64_t seed);

/// Pairs root/rainy/NAME.png with root/clean/NAME.png, sorted by NAME.
/// Unmatched names are listed in the exception message.
std::vector<PairedSample> load_pairs(const std::filesystem::path& root);

struct Augmentation {
  int top = 0;
  int left = 0;
  int crop = 0;   // 0 keeps the full image
  bool flip = false;
};

Image flip_horizontal(const Image& image);
Image crop(const Image& image, int top, int left, int size);
Image apply(const Image& image, const Augmentation& aug);

/// Draws a crop position and a horizontal flip with probability 0.5. The crop
/// must be a positive multiple of 4 no larger than either side.
Augmentation sample_augmentation(int height, int width, int crop_size, std::mt19937_64& rng);

/// Applies one sampled augmentation to both images; `record` receives it.
PairedSample augment(const PairedSample& sample, int crop_size, std::mt19937_64& rng,
                     Augmentation* record = nullptr);

/// Permutation of [0, n) for the given epoch. Depends only on (n, seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Concatenates (1, c, H, W) images along the batch axis.
diff::Tensor<float> stack(const std::vector<Image>& images);

/// Image `index` of a batch as (1, c, H, W).
Image unstack(const diff::Tensor<float>& batch, int index);

}  // namespace umff::data
