#include "umff/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "umff/checkpoint.hpp"
#include "umff/data.hpp"
#include "umff/eval.hpp"
#include "umff/model.hpp"
#include "umff/train.hpp"

namespace fs = std::filesystem;

namespace umff::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, r.ptr);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), tag};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::string pair_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

void require_model_shape(const diff::Shape& s, const std::string& what) {
  if (s.h > 0 && s.w > 0 && s.h % 4 == 0 && s.w % 4 == 0) return;
  const auto down = [](int v) { return std::max(4, v / 4 * 4); };
  const auto up = [](int v) { return std::max(4, (v + 3) / 4 * 4); };
  std::ostringstream os;
  os << what << " is " << s.h << "x" << s.w << "; the model needs height and width that are positive multiples of 4"
     << " (crop to " << down(s.h) << "x" << down(s.w) << " or pad to " << up(s.h) << "x" << up(s.w) << ")";
  throw std::runtime_error(os.str());
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string clean;
  bool procedural = false;
  std::string out;
  int count = 8;
  int size = 64;
  std::uint64_t seed = 0;
  data::RainSpec rain;
  bool force = false;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--clean", a.clean, "Directory of clean PNG images to crop from")->type_name("DIR");
  app.add_flag("--procedural", a.procedural, "Generate gradient, checkerboard and texture clean images instead");
  app.add_option("--out", a.out, "Output dataset root (receives rainy/, clean/, manifest.txt)")
      ->type_name("DIR")
      ->required();
  app.add_option("--count", a.count, "Number of pairs")->type_name("N")->capture_default_str();
  app.add_option("--size", a.size, "Side length of each square image")->type_name("S")->capture_default_str();
  app.add_option("--seed", a.seed, "Base seed")->type_name("K")->capture_default_str();
  app.add_option("--density", a.rain.streak_density, "Fraction of pixels seeding a streak")
      ->type_name("F")
      ->capture_default_str();
  app.add_option("--length", a.rain.streak_length, "Streak length in pixels")->type_name("L")->capture_default_str();
  app.add_option("--angle", a.rain.angle_range, "Streak angle range in degrees either side of vertical")
      ->type_name("DEG")
      ->capture_default_str();
  app.add_option("--intensity", a.rain.intensity, "Streak intensity in [0, 1]")->type_name("I")->capture_default_str();
  app.add_flag("--force", a.force, "Replace an existing dataset in a non-empty output directory");
}

int run_synth(const SynthArgs& a, std::ostream& out) {
  if (a.procedural == !a.clean.empty()) throw UsageError("synth needs exactly one of --clean DIR or --procedural");
  if (a.count <= 0) throw UsageError("--count must be positive");
  if (a.size <= 0) throw UsageError("--size must be positive");
  try {
    a.rain.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path root(a.out);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!a.force) throw UsageError("output directory " + root.string() + " is not empty (pass --force to replace)");
    fs::remove_all(root / "rainy");
    fs::remove_all(root / "clean");
    fs::remove(root / "manifest.txt");
  }

  std::vector<fs::path> sources;
  if (!a.procedural) {
    sources = list_pngs(a.clean);
    if (sources.empty()) throw std::runtime_error("no PNG files in " + a.clean);
  }
  fs::create_directories(root / "rainy");
  fs::create_directories(root / "clean");

  std::ostringstream manifest;
  manifest << "# name source density length angle_range intensity seed\n";
  constexpr data::Pattern kPatterns[] = {data::Pattern::Gradient, data::Pattern::Checkerboard, data::Pattern::Texture};
  for (int i = 0; i < a.count; ++i) {
    const std::string name = pair_name(i);
    data::Image clean;
    std::string source;
    if (a.procedural) {
      const data::Pattern p = kPatterns[i % 3];
      clean = data::procedural_clean(p, a.size, derive_seed(a.seed, i, 0xc1ea));
      source = "procedural:" + std::string(data::pattern_name(p));
    } else {
      const fs::path& file = sources[static_cast<std::size_t>(i) % sources.size()];
      const data::Image full = data::read_png(file);
      const auto s = full.shape();
      if (s.h < a.size || s.w < a.size) {
        throw std::runtime_error(file.string() + " is " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                                 ", smaller than --size " + std::to_string(a.size));
      }
      std::mt19937_64 rng(derive_seed(a.seed, i, 0xc40b));
      const int top = std::uniform_int_distribution<int>(0, s.h - a.size)(rng);
      const int left = std::uniform_int_distribution<int>(0, s.w - a.size)(rng);
      clean = data::crop(full, top, left, a.size);
      source = file.filename().string() + "@" + std::to_string(top) + "," + std::to_string(left);
    }
    data::RainSpec spec = a.rain;
    spec.seed = derive_seed(a.seed, i, 0x4a1);
    const auto pair = data::synthesize_rain(clean, spec, name);
    data::write_png(root / "clean" / (name + ".png"), pair.clean);
    data::write_png(root / "rainy" / (name + ".png"), pair.rainy);
    manifest << "name=" << name << " source=" << source << " density=" << shortest(spec.streak_density)
             << " length=" << spec.streak_length << " angle_range=" << shortest(spec.angle_range)
             << " intensity=" << shortest(spec.intensity) << " seed=" << spec.seed << '\n';
  }
  std::ofstream(root / "manifest.txt", std::ios::binary) << manifest.str();
  out << "wrote " << a.count << " pairs to " << root.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string validation;
  std::string out;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> sets;
};

void add_train(CLI::App& app, TrainArgs& a) {
  app.add_option("--config", a.config, "key=value configuration file")->type_name("FILE");
  app.add_option("--data", a.data, "Training dataset root")->type_name("DIR")->required();
  app.add_option("--validation", a.validation, "Validation dataset root; enables best.ckpt")->type_name("DIR");
  app.add_option("--out", a.out, "Run directory for checkpoints, metrics.log and config.txt")
      ->type_name("DIR")
      ->required();
  const auto flag_to_key = [&app, &a](const char* flag, const char* key, const char* type, const char* help) {
    app.add_option_function<std::string>(
           flag, [&a, key](const std::string& v) { a.overrides.emplace_back(key, v); }, help)
        ->type_name(type);
  };
  flag_to_key("--variant", "variant", "NAME", "Model variant: T, B, L or custom");
  flag_to_key("--epochs", "epochs", "N", "Number of epochs");
  flag_to_key("--max-steps", "max_steps", "N", "Stop after N optimizer steps (0: no limit)");
  flag_to_key("--batch-size", "batch_size", "N", "Mini-batch size");
  flag_to_key("--lr", "initial_lr", "X", "Initial learning rate");
  flag_to_key("--crop", "crop", "N", "Training crop side (positive multiple of 4)");
  flag_to_key("--seed", "seed", "K", "Seed for initialization, shuffling and augmentation");
  app.add_option("--set", a.sets, "Override any configuration key (repeatable)")->type_name("KEY=VALUE");
}

void apply_override(train::RunConfig& rc, const std::string& key, const std::string& value) {
  try {
    if (rc.model.set(key, value) || rc.train.set(key, value)) return;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  throw UsageError("unknown configuration key '" + key + "'");
}

int run_train(const TrainArgs& a, std::ostream& out) {
  train::RunConfig rc;
  if (!a.config.empty()) {
    if (!fs::is_regular_file(a.config)) throw UsageError("config file not found: " + a.config);
    try {
      rc = train::load_config(a.config);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  for (const auto& [k, v] : a.overrides) apply_override(rc, k, v);
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
    apply_override(rc, s.substr(0, eq), s.substr(eq + 1));
  }
  try {
    rc.model.validate();
    rc.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto dataset = data::load_pairs(a.data);
  std::vector<data::PairedSample> validation;
  if (!a.validation.empty()) validation = data::load_pairs(a.validation);

  const fs::path run_dir(a.out);
  fs::create_directories(run_dir);
  std::ofstream(run_dir / "config.txt", std::ios::binary) << rc.to_record();

  auto model = model::Model<float>::build(rc.model, rc.train.seed);
  train::TrainOptions opts;
  opts.out_dir = run_dir;
  if (!validation.empty()) opts.validation = &validation;
  opts.on_step = [&out](const train::StepMetrics& m) { out << m.line() << '\n'; };
  const auto result = train::train(model, dataset, rc.train, opts);
  out << "trained " << result.steps << " steps over " << result.epochs_completed << " epochs; checkpoint "
      << (run_dir / "last.ckpt").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string model;
  std::string input;
  std::string output;
  std::string uncertainty;
};

void add_infer(CLI::App& app, InferArgs& a) {
  app.add_option("--model", a.model, "Checkpoint file")->type_name("CKPT")->required();
  app.add_option("--input", a.input, "Rainy PNG image")->type_name("IMG")->required();
  app.add_option("--output", a.output, "Derained PNG image to write")->type_name("IMG")->required();
  app.add_option("--uncertainty", a.uncertainty,
                 "Also write PREFIX_{alpha,beta,uncertainty}.umap and min-max .png previews")
      ->type_name("PREFIX");
}

int run_infer(const InferArgs& a, std::ostream& out) {
  const auto model = checkpoint::instantiate(checkpoint::load(a.model));
  const auto image = data::read_png(a.input);
  require_model_shape(image.shape(), "input " + a.input);
  const auto result = model.forward(image);
  data::write_png(a.output, result.derained[0]);
  out << "wrote " << a.output << '\n';
  if (!a.uncertainty.empty()) {
    if (!result.params) throw std::runtime_error("checkpoint " + a.model + " has no uncertainty branch");
    const std::pair<const char*, const diff::Tensor<float>*> maps[] = {
        {"alpha", &result.params->alpha}, {"beta", &result.params->beta}, {"uncertainty", &result.uncertainty}};
    for (const auto& [name, t] : maps) {
      const FloatMap m = to_float_map(*t);
      const std::string base = a.uncertainty + "_" + name;
      write_umap(base + ".umap", m);
      data::write_png(base + ".png", preview(m));
      out << "wrote " << base << ".umap and " << base << ".png\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  std::string data;
  std::string report;
  std::string csv;
  int timing = 0;
  std::uint64_t seed = 0;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  app.add_option("--model", a.model, "Checkpoint file")->type_name("CKPT")->required();
  app.add_option("--data", a.data, "Dataset root with rainy/ and clean/")->type_name("DIR")->required();
  app.add_option("--report", a.report, "Text report to write")->type_name("FILE")->required();
  app.add_option("--csv", a.csv, "Per-image CSV to write")->type_name("FILE");
  app.add_option("--timing", a.timing, "Timed inference repeats on the first image (0: skip)")
      ->type_name("N")
      ->capture_default_str();
  app.add_option("--seed", a.seed, "Seed for the random-removal baseline")->type_name("K")->capture_default_str();
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  if (a.timing < 0) throw UsageError("--timing must be non-negative");
  const auto model = checkpoint::instantiate(checkpoint::load(a.model));
  const auto samples = data::load_pairs(a.data);
  for (const auto& s : samples) require_model_shape(s.rainy.shape(), "image " + s.id);
  const auto report = eval::evaluate(model, samples, a.timing, a.seed);
  std::ofstream(a.report, std::ios::binary) << report.to_text();
  if (!a.csv.empty()) std::ofstream(a.csv, std::ios::binary) << report.to_csv();
  out << "images=" << report.rows.size() << " mean_psnr_input=" << eval::format_metric(report.mean_psnr_input)
      << " mean_psnr_output=" << eval::format_metric(report.mean_psnr_output)
      << " mean_ssim_output=" << eval::format_metric(report.mean_ssim_output) << " mean_spearman="
      << (report.mean_spearman ? eval::format_metric(*report.mean_spearman) : std::string("degenerate")) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string model;
};

void add_inspect(CLI::App& app, InspectArgs& a) {
  app.add_option("--model", a.model, "Checkpoint file")->type_name("CKPT")->required();
}

int run_inspect(const InspectArgs& a, std::ostream& out) {
  const auto ckpt = checkpoint::load(a.model);
  const auto model = checkpoint::instantiate(ckpt);
  out << model.summarize();
  if (ckpt.optimizer) out << "optimizer_step " << ckpt.optimizer->step << '\n';
  return kExitOk;
}

}  // namespace

FloatMap to_float_map(const diff::Tensor<float>& t) {
  const auto s = t.shape();
  if (s.n != 1 || s.c < 1) throw std::invalid_argument("to_float_map expects (1, c, H, W), got " + s.str());
  FloatMap m{s.w, s.h, std::vector<float>(s.plane(), 0.0f)};
  const auto d = t.data();
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    double acc = 0.0;
    for (int c = 0; c < s.c; ++c) acc += d[static_cast<std::size_t>(c) * s.plane() + i];
    m.values[i] = static_cast<float>(acc / s.c);
  }
  return m;
}

void write_umap(const fs::path& path, const FloatMap& map) {
  static_assert(std::endian::native == std::endian::little, "UMAP I/O assumes a little-endian host");
  if (map.values.size() != static_cast<std::size_t>(map.width) * static_cast<std::size_t>(map.height)) {
    throw std::invalid_argument("write_umap: value count does not match width x height");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "UMAP\n" << map.width << ' ' << map.height << '\n';
  f.write(reinterpret_cast<const char*>(map.values.data()),
          static_cast<std::streamsize>(map.values.size() * sizeof(float)));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

FloatMap read_umap(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  std::getline(f, magic);
  if (magic != "UMAP") throw std::runtime_error(path.string() + ": bad UMAP magic");
  FloatMap m;
  f >> m.width >> m.height;
  if (!f || f.get() != '\n' || m.width <= 0 || m.height <= 0) {
    throw std::runtime_error(path.string() + ": malformed UMAP header");
  }
  m.values.resize(static_cast<std::size_t>(m.width) * static_cast<std::size_t>(m.height));
  f.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(m.values.size() * sizeof(float))) {
    throw std::runtime_error(path.string() + ": truncated UMAP values");
  }
  if (f.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path.string() + ": trailing bytes");
  return m;
}

diff::Tensor<float> preview(const FloatMap& map) {
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  std::vector<float> v(map.values.size(), 0.0f);
  if (lo != map.values.end() && *hi > *lo) {
    const double range = static_cast<double>(*hi) - *lo;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((map.values[i] - *lo) / range);
  }
  return diff::Tensor<float>::from({1, 1, map.height, map.width}, std::move(v));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"UMFFNet deraining with generalized-Gaussian uncertainty", "umff"};
  app.require_subcommand(1);

  SynthArgs synth;
  TrainArgs tr;
  InferArgs infer;
  EvalArgs ev;
  InspectArgs inspect;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic paired rain dataset");
  auto* train_cmd = app.add_subcommand("train", "Train a model on a paired dataset");
  auto* infer_cmd = app.add_subcommand("infer", "Derain one image, optionally exporting uncertainty maps");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a paired dataset");
  auto* inspect_cmd = app.add_subcommand("inspect", "Print the parameter table of a checkpoint");
  add_synth(*synth_cmd, synth);
  add_train(*train_cmd, tr);
  add_infer(*infer_cmd, infer);
  add_eval(*eval_cmd, ev);
  add_inspect(*inspect_cmd, inspect);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth, out);
    if (train_cmd->parsed()) return run_train(tr, out);
    if (infer_cmd->parsed()) return run_infer(infer, out);
    if (eval_cmd->parsed()) return run_eval(ev, out);
    if (inspect_cmd->parsed()) return run_inspect(inspect, out);
  } catch (const UsageError& e) {
    err << "umff: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "umff: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace umff::cli
