#include "umff/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace umff::data {

namespace fs = std::filesystem;
using diff::Shape;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(const fs::path& path, const std::string& what) {
  throw std::runtime_error("png " + path.string() + ": " + what);
}

void on_png_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const fs::path& path) {
  File file(std::fopen(path.string().c_str(), "rb"));
  if (!file) png_fail(path, "cannot open");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    png_fail(path, "not a PNG file");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) png_fail(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    png_fail(path, "libpng init failed");
  }
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  // No destructors with side effects may be pending between setjmp and longjmp.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    png_fail(path, error.empty() ? "decode error" : error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int colour = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    png_fail(path, "16-bit samples are not supported");
  }
  if (colour == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (colour == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (colour == PNG_COLOR_TYPE_GRAY || colour == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (colour & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    png_fail(path, "unexpected row layout");
  }
  pixels.resize(static_cast<std::size_t>(width) * height * 3);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const int h = static_cast<int>(height), w = static_cast<int>(width);
  Image img = Image::zeros({1, 3, h, w});
  auto d = img.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) d[c * plane + i] = static_cast<float>(pixels[i * 3 + c]) / 255.0f;
  return img;
}

void write_png(const fs::path& path, const Image& image) {
  const Shape s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) {
    throw std::invalid_argument("write_png: expected (1, 1|3, H, W), got " + s.str());
  }
  const std::size_t plane = s.plane();
  std::vector<unsigned char> pixels(plane * s.c);
  auto d = image.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < s.c; ++c) {
      const float v = std::clamp(d[c * plane + i], 0.0f, 1.0f);
      pixels[i * s.c + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }

  File file(std::fopen(path.string().c_str(), "wb"));
  if (!file) png_fail(path, "cannot open for writing");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) png_fail(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    png_fail(path, "libpng init failed");
  }
  std::vector<png_bytep> rows(s.h);
  for (int y = 0; y < s.h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * s.w * s.c;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    png_fail(path, error.empty() ? "encode error" : error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, s.w, s.h, 8, s.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) png_fail(path, "write failed");
}

void RainSpec::validate() const {
  if (!(streak_density > 0.0 && streak_density <= 1.0)) {
    throw std::invalid_argument("rain: streak_density must be in (0, 1]");
  }
  if (streak_length < 2) throw std::invalid_argument("rain: streak_length must be at least 2 (degenerate kernel)");
  if (!(angle_range >= 0.0 && angle_range <= 90.0)) {
    throw std::invalid_argument("rain: angle_range must be in [0, 90] degrees");
  }
  if (!(intensity >= 0.0 && intensity <= 1.0)) throw std::invalid_argument("rain: intensity must be in [0, 1]");
}

std::vector<float> line_kernel(int length, double angle_deg, int* size) {
  if (length < 2) throw std::invalid_argument("line_kernel: length must be at least 2");
  const int k = length | 1;
  std::vector<float> kern(static_cast<std::size_t>(k) * k, 0.0f);
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::sin(theta), dy = std::cos(theta);
  const double half = 0.5 * (length - 1);
  const int samples = 8 * length;
  const double centre = 0.5 * (k - 1);
  for (int i = 0; i <= samples; ++i) {
    const double t = -half + (2.0 * half) * i / samples;
    const int x = static_cast<int>(std::lround(centre + t * dx));
    const int y = static_cast<int>(std::lround(centre + t * dy));
    if (x >= 0 && x < k && y >= 0 && y < k) kern[static_cast<std::size_t>(y) * k + x] = 1.0f;
  }
  *size = k;
  return kern;
}

PairedSample synthesize_rain(const Image& clean, const RainSpec& spec, std::string id) {
  spec.validate();
  const Shape s = clean.shape();
  if (s.n != 1 || s.c != 3) throw std::invalid_argument("synthesize_rain: expected (1, 3, H, W), got " + s.str());
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t plane = s.plane();
  std::vector<double> noise(plane);
  for (auto& v : noise) v = unit(rng);
  const double angle = spec.angle_range * (2.0 * unit(rng) - 1.0);

  std::vector<double> sorted = noise;
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.streak_density * static_cast<double>(plane))));
  std::nth_element(sorted.begin(), sorted.begin() + (keep - 1), sorted.end(), std::greater<>());
  const double threshold = sorted[keep - 1];

  int k = 0;
  const std::vector<float> kern = line_kernel(spec.streak_length, angle, &k);
  const int r = k / 2;
  std::vector<float> rain(plane, 0.0f);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      if (noise[static_cast<std::size_t>(y) * s.w + x] < threshold) continue;
      for (int ky = 0; ky < k; ++ky) {
        const int yy = y + ky - r;
        if (yy < 0 || yy >= s.h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int xx = x + kx - r;
          if (xx < 0 || xx >= s.w) continue;
          rain[static_cast<std::size_t>(yy) * s.w + xx] += kern[static_cast<std::size_t>(ky) * k + kx];
        }
      }
    }

  Image rainy = clean.clone();
  rainy.set_requires_grad(false);
  auto d = rainy.data();
  const float gain = static_cast<float>(spec.intensity);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const float streak = gain * std::min(rain[i], 1.0f);
      d[c * plane + i] = std::clamp(d[c * plane + i] + streak, 0.0f, 1.0f);
    }
  Image clean_copy = clean.clone();
  clean_copy.set_requires_grad(false);
  return {std::move(rainy), std::move(clean_copy), std::move(id)};
}

std::string_view pattern_name(Pattern p) {
  switch (p) {
    case Pattern::Gradient: return "gradient";
    case Pattern::Checkerboard: return "checkerboard";
    case Pattern::Texture: return "texture";
  }
  return "?";
}

Image procedural_clean(Pattern pattern, int size, std::uint64_t seed) {
  if (size <= 0) throw std::invalid_argument("procedural_clean: size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image img = Image::zeros({1, 3, size, size});
  auto d = img.data();
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  const double inv = 1.0 / size;
  switch (pattern) {
    case Pattern::Gradient: {
      for (int c = 0; c < 3; ++c) {
        const double a = 0.15 + 0.35 * unit(rng), b = 0.6 * unit(rng) - 0.3, e = 0.6 * unit(rng) - 0.3;
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            d[c * plane + y * size + x] = static_cast<float>(std::clamp(a + b * x * inv + e * y * inv, 0.0, 0.85));
      }
      break;
    }
    case Pattern::Checkerboard: {
      const int cell = 4 + static_cast<int>(unit(rng) * 12);
      double lo[3], hi[3];
      for (int c = 0; c < 3; ++c) {
        lo[c] = 0.05 + 0.3 * unit(rng);
        hi[c] = 0.45 + 0.4 * unit(rng);
      }
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const bool on = ((x / cell) + (y / cell)) % 2 == 0;
          for (int c = 0; c < 3; ++c) d[c * plane + y * size + x] = static_cast<float>(on ? hi[c] : lo[c]);
        }
      break;
    }
    case Pattern::Texture: {
      constexpr int kWaves = 4;
      for (int c = 0; c < 3; ++c) {
        double fx[kWaves], fy[kWaves], ph[kWaves], amp[kWaves];
        for (int i = 0; i < kWaves; ++i) {
          fx[i] = (unit(rng) * 2.0 - 1.0) * 6.0;
          fy[i] = (unit(rng) * 2.0 - 1.0) * 6.0;
          ph[i] = unit(rng) * 2.0 * std::numbers::pi;
          amp[i] = 0.05 + 0.1 * unit(rng);
        }
        const double base = 0.25 + 0.3 * unit(rng);
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) {
            double v = base;
            for (int i = 0; i < kWaves; ++i) {
              v += amp[i] * std::sin(2.0 * std::numbers::pi * (fx[i] * x + fy[i] * y) * inv + ph[i]);
            }
            d[c * plane + y * size + x] = static_cast<float>(std::clamp(v, 0.0, 0.85));
          }
      }
      break;
    }
  }
  return img;
}

namespace {

std::set<std::string> png_names(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("load_pairs: missing directory " + dir.string());
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") names.insert(e.path().filename().string());
  }
  return names;
}

}  // namespace

std::vector<PairedSample> load_pairs(const fs::path& root) {
  const auto rainy = png_names(root / "rainy");
  const auto clean = png_names(root / "clean");
  std::vector<std::string> unmatched;
  for (const auto& n : rainy)
    if (!clean.contains(n)) unmatched.push_back("rainy/" + n);
  for (const auto& n : clean)
    if (!rainy.contains(n)) unmatched.push_back("clean/" + n);
  if (!unmatched.empty()) {
    std::ostringstream os;
    os << "load_pairs: " << unmatched.size() << " unmatched file(s) under " << root.string() << ":";
    for (const auto& u : unmatched) os << ' ' << u;
    throw std::runtime_error(os.str());
  }
  std::vector<PairedSample> out;
  for (const auto& n : rainy) {
    PairedSample p{read_png(root / "rainy" / n), read_png(root / "clean" / n), fs::path(n).stem().string()};
    if (!(p.rainy.shape() == p.clean.shape())) {
      throw std::runtime_error("load_pairs: size mismatch for " + n + ": " + p.rainy.shape().str() + " vs " +
                               p.clean.shape().str());
    }
    out.push_back(std::move(p));
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  const Shape s = image.shape();
  Image out = Image::zeros(s);
  auto in = image.data();
  auto o = out.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y) {
        const std::size_t row = ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w;
        for (int x = 0; x < s.w; ++x) o[row + x] = in[row + (s.w - 1 - x)];
      }
  return out;
}

Image crop(const Image& image, int top, int left, int size) {
  const Shape s = image.shape();
  if (size <= 0 || top < 0 || left < 0 || top + size > s.h || left + size > s.w) {
    throw std::invalid_argument("crop: window " + std::to_string(size) + " at (" + std::to_string(top) + ", " +
                                std::to_string(left) + ") does not fit " + s.str());
  }
  Image out = Image::zeros({s.n, s.c, size, size});
  auto in = image.data();
  auto o = out.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < size; ++y) {
        const std::size_t src = ((static_cast<std::size_t>(n) * s.c + c) * s.h + top + y) * s.w + left;
        const std::size_t dst = ((static_cast<std::size_t>(n) * s.c + c) * size + y) * size;
        std::copy_n(in.begin() + src, size, o.begin() + dst);
      }
  return out;
}

Image apply(const Image& image, const Augmentation& aug) {
  Image out = aug.crop > 0 ? crop(image, aug.top, aug.left, aug.crop) : image.clone();
  return aug.flip ? flip_horizontal(out) : out;
}

Augmentation sample_augmentation(int height, int width, int crop_size, std::mt19937_64& rng) {
  if (crop_size <= 0 || crop_size % 4 != 0) {
    throw std::invalid_argument("augment: crop " + std::to_string(crop_size) + " is not a positive multiple of 4");
  }
  if (crop_size > height || crop_size > width) {
    throw std::invalid_argument("augment: crop " + std::to_string(crop_size) + " exceeds image " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  Augmentation a;
  a.crop = crop_size;
  a.top = std::uniform_int_distribution<int>(0, height - crop_size)(rng);
  a.left = std::uniform_int_distribution<int>(0, width - crop_size)(rng);
  a.flip = std::bernoulli_distribution(0.5)(rng);
  return a;
}

PairedSample augment(const PairedSample& sample, int crop_size, std::mt19937_64& rng, Augmentation* record) {
  const Shape s = sample.rainy.shape();
  const Augmentation a = sample_augmentation(s.h, s.w, crop_size, rng);
  if (record) *record = a;
  return {apply(sample.rainy, a), apply(sample.clean, a), sample.id};
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

diff::Tensor<float> stack(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("stack: no images");
  const Shape s0 = images.front().shape();
  std::vector<float> values;
  values.reserve(s0.numel() * images.size());
  for (const auto& im : images) {
    const Shape s = im.shape();
    if (s.n != 1 || s.c != s0.c || s.h != s0.h || s.w != s0.w) {
      throw std::invalid_argument("stack: image " + s.str() + " differs from " + s0.str());
    }
    values.insert(values.end(), im.data().begin(), im.data().end());
  }
  return diff::Tensor<float>::from({static_cast<int>(images.size()), s0.c, s0.h, s0.w}, std::move(values));
}

Image unstack(const diff::Tensor<float>& batch, int index) {
  const Shape s = batch.shape();
  if (index < 0 || index >= s.n) throw std::out_of_range("unstack: index out of range");
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  std::vector<float> values(batch.data().begin() + index * per, batch.data().begin() + (index + 1) * per);
  return Image::from({1, s.c, s.h, s.w}, std::move(values));
}

}  // namespace umff::data
