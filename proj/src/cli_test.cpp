#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "umff/checkpoint.hpp"
#include "umff/cli.hpp"
#include "umff/data.hpp"
#include "umff/eval.hpp"
#include "umff/model.hpp"

using namespace umff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("umff_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Relative path -> bytes for every regular file under `root`.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

std::set<std::string> long_flags(const std::string& text) {
  static const std::regex flag(R"(--[a-z][a-z-]*)");
  std::set<std::string> flags;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), flag); it != std::sregex_iterator(); ++it) {
    flags.insert(it->str());
  }
  flags.erase("--help");
  return flags;
}

// Flags listed in the README table under the "### `umff <sub>`" heading.
std::set<std::string> documented_flags(const std::string& readme, const std::string& sub) {
  const std::string heading = "### `umff " + sub + "`";
  const auto start = readme.find(heading);
  REQUIRE_MESSAGE(start != std::string::npos, "README has no section " << heading);
  const auto end = readme.find("\n#", start + heading.size());
  std::istringstream section(readme.substr(start, end - start));
  std::string rows, line;
  while (std::getline(section, line)) {
    if (line.rfind("| `--", 0) == 0) rows += line.substr(0, line.find('|', 1)) + '\n';
  }
  return long_flags(rows);
}

fs::path make_dataset(const std::string& name, int count, int size) {
  const fs::path root = scratch(name);
  const auto r = invoke({"synth", "--procedural", "--out", (root / "ds").string(), "--count", std::to_string(count),
                       "--size", std::to_string(size), "--seed", "3", "--force"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  return root / "ds";
}

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.variant = model::Variant::Custom;
  c.base_blocks = 1;
  c.base_channels = 4;
  return c;
}

fs::path save_model(const fs::path& path, const model::Model<float>& m) {
  checkpoint::save(path, checkpoint::capture(m));
  return path;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("every subcommand's --help lists exactly the flags documented in README.md") {
    const std::string readme = slurp(UMFF_README_PATH);
    REQUIRE(!readme.empty());
    for (const std::string sub : {"synth", "train", "infer", "eval", "inspect"}) {
      CAPTURE(sub);
      const auto r = invoke({sub, "--help"});
      CHECK(r.code == 0);
      const auto shown = long_flags(r.out);
      CHECK(!shown.empty());
      CHECK(shown == documented_flags(readme, sub));
    }
    const auto top = invoke({"--help"});
    CHECK(top.code == 0);
    for (const char* sub : {"synth", "train", "infer", "eval", "inspect"}) CHECK(top.out.find(sub) != std::string::npos);
  }

  TEST_CASE("usage errors exit 1") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"inspect"}).code == 1);
    const auto unknown = invoke({"inspect", "--model", "x.ckpt", "--verbose"});
    CHECK(unknown.code == 1);
    CHECK(unknown.err.find("--verbose") != std::string::npos);
    const fs::path d = scratch("usage");
    CHECK(invoke({"synth", "--out", (d / "a").string()}).code == 1);
    CHECK(invoke({"synth", "--procedural", "--clean", d.string(), "--out", (d / "a").string()}).code == 1);
    CHECK(invoke({"synth", "--procedural", "--out", (d / "a").string(), "--intensity", "2"}).code == 1);
    CHECK(invoke({"synth", "--procedural", "--out", (d / "a").string(), "--count", "0"}).code == 1);
  }

  TEST_CASE("runtime failures exit 2") {
    const fs::path d = scratch("runtime");
    const auto r = invoke({"inspect", "--model", (d / "missing.ckpt").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("missing.ckpt") != std::string::npos);
    std::ofstream(d / "bad.ckpt", std::ios::binary) << "NOPE";
    CHECK(invoke({"inspect", "--model", (d / "bad.ckpt").string()}).code == 2);
  }

  TEST_CASE("synth --count 8 --size 64 writes 8 matched 64x64 pairs and a manifest") {
    const fs::path ds = make_dataset("count", 8, 64);
    const auto pairs = data::load_pairs(ds);
    REQUIRE(pairs.size() == 8);
    for (const auto& p : pairs) {
      CHECK(p.rainy.shape() == diff::Shape{1, 3, 64, 64});
      CHECK(p.clean.shape() == diff::Shape{1, 3, 64, 64});
    }
    CHECK(pairs.front().id == "0000");
    std::istringstream manifest(slurp(ds / "manifest.txt"));
    std::string line;
    int rows = 0;
    while (std::getline(manifest, line)) {
      if (line.empty() || line[0] == '#') continue;
      CHECK(line.find("name=" + pairs[static_cast<std::size_t>(rows)].id + " ") == 0);
      CHECK(line.find(" density=0.01 length=11 angle_range=20 intensity=0.6 seed=") != std::string::npos);
      ++rows;
    }
    CHECK(rows == 8);
  }

  TEST_CASE("synth is byte-identical for the same seed and differs for another") {
    const fs::path d = scratch("idem");
    const std::vector<std::string> base = {"synth", "--procedural", "--count", "4", "--size", "32", "--seed", "11"};
    auto with_out = [&](const fs::path& o) {
      auto a = base;
      a.insert(a.end(), {"--out", o.string()});
      return a;
    };
    REQUIRE(invoke(with_out(d / "a")).code == 0);
    REQUIRE(invoke(with_out(d / "b")).code == 0);
    CHECK(snapshot(d / "a") == snapshot(d / "b"));
    auto other = with_out(d / "c");
    other[7] = "12";
    REQUIRE(invoke(other).code == 0);
    CHECK(snapshot(d / "a") != snapshot(d / "c"));
  }

  TEST_CASE("synth --intensity 0 leaves rainy files byte-identical to clean files") {
    const fs::path d = scratch("zero");
    REQUIRE(invoke({"synth", "--procedural", "--out", (d / "o").string(), "--count", "3", "--size", "24",
                  "--intensity", "0"})
                .code == 0);
    for (const char* n : {"0000.png", "0001.png", "0002.png"}) {
      CHECK(slurp(d / "o" / "rainy" / n) == slurp(d / "o" / "clean" / n));
    }
  }

  TEST_CASE("synth refuses a non-empty output directory unless --force") {
    const fs::path d = scratch("force");
    std::ofstream(d / "keep.txt") << "x";
    const std::vector<std::string> args = {"synth", "--procedural", "--out", d.string(), "--count", "2", "--size", "16"};
    const auto r = invoke(args);
    CHECK(r.code == 1);
    CHECK(r.err.find("--force") != std::string::npos);
    auto forced = args;
    forced.push_back("--force");
    CHECK(invoke(forced).code == 0);
    CHECK(data::load_pairs(d).size() == 2);
    CHECK(fs::exists(d / "keep.txt"));
  }

  TEST_CASE("synth --clean crops from source images") {
    const fs::path d = scratch("clean_src");
    fs::create_directories(d / "src");
    data::write_png(d / "src" / "a.png", data::procedural_clean(data::Pattern::Texture, 40, 1));
    data::write_png(d / "src" / "b.png", data::procedural_clean(data::Pattern::Gradient, 40, 2));
    const auto r = invoke({"synth", "--clean", (d / "src").string(), "--out", (d / "o").string(), "--count", "3",
                         "--size", "32", "--seed", "5"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto pairs = data::load_pairs(d / "o");
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].clean.shape() == diff::Shape{1, 3, 32, 32});
    CHECK(slurp(d / "o" / "manifest.txt").find("source=b.png@") != std::string::npos);
    const auto small = invoke({"synth", "--clean", (d / "src").string(), "--out", (d / "p").string(), "--size", "64"});
    CHECK(small.code == 2);
    CHECK(small.err.find("smaller than --size") != std::string::npos);
  }

  TEST_CASE("train: flags override the config file and the effective config is echoed") {
    const fs::path ds = make_dataset("train_ds", 4, 32);
    const fs::path d = scratch("train");
    std::ofstream(d / "run.cfg") << "# tiny run\nvariant = custom\nbase_blocks = 1\nbase_channels = 4\n"
                                 << "epochs = 7\ncrop = 16\nbatch_size = 2\n";
    const auto r = invoke({"train", "--config", (d / "run.cfg").string(), "--data", ds.string(), "--out",
                         (d / "run").string(), "--crop", "32", "--max-steps", "3", "--set", "initial_lr=0.0005"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string echoed = slurp(d / "run" / "config.txt");
    CHECK(echoed.find("crop=32\n") != std::string::npos);
    CHECK(echoed.find("epochs=7\n") != std::string::npos);
    CHECK(echoed.find("base_channels=4\n") != std::string::npos);
    CHECK(echoed.find("max_steps=3\n") != std::string::npos);
    CHECK(echoed.find("initial_lr=0.0005\n") != std::string::npos);
    CHECK(fs::exists(d / "run" / "last.ckpt"));
    std::istringstream log(slurp(d / "run" / "metrics.log"));
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) ++lines;
    CHECK(lines == 3);
    CHECK(r.out.find("trained 3 steps") != std::string::npos);
    CHECK(checkpoint::load(d / "run" / "last.ckpt").config.base_channels == 4);
  }

  TEST_CASE("train rejects unknown keys and bad values as usage errors") {
    const fs::path ds = make_dataset("train_bad_ds", 2, 16);
    const fs::path d = scratch("train_bad");
    std::ofstream(d / "bad.cfg") << "epochs = 2\nlearning_rate = 3\n";
    const auto r = invoke({"train", "--config", (d / "bad.cfg").string(), "--data", ds.string(), "--out",
                         (d / "r").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("learning_rate") != std::string::npos);
    CHECK(invoke({"train", "--data", ds.string(), "--out", (d / "r").string(), "--set", "nope=1"}).code == 1);
    CHECK(invoke({"train", "--data", ds.string(), "--out", (d / "r").string(), "--crop", "30"}).code == 1);
    CHECK(invoke({"train", "--data", ds.string(), "--out", (d / "r").string(), "--epochs", "many"}).code == 1);
    CHECK(invoke({"train", "--data", (d / "nowhere").string(), "--out", (d / "r").string()}).code == 2);
  }

  TEST_CASE("inspect on a T checkpoint prints the table and a total in [1.0, 2.6] million") {
    const fs::path d = scratch("inspect");
    const auto cfg = model::ModelConfig::preset(model::Variant::T);
    const auto ckpt = save_model(d / "t.ckpt", model::Model<float>::build(cfg, 1));
    const auto r = invoke({"inspect", "--model", ckpt.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto pos = r.out.find("\ntotal ");
    REQUIRE(pos != std::string::npos);
    const long total = std::stol(r.out.substr(pos + 7));
    CHECK(total >= 1'000'000);
    CHECK(total <= 2'600'000);
    CHECK(r.out.find("parameter") != std::string::npos);
  }

  TEST_CASE("infer writes the image and three UMAP maps with previews, byte-identically on rerun") {
    const fs::path d = scratch("infer");
    const auto ckpt = save_model(d / "m.ckpt", model::Model<float>::build(tiny_config(), 2));
    const auto sample = data::synthesize_rain(data::procedural_clean(data::Pattern::Texture, 24, 4), {}, "x");
    data::write_png(d / "in.png", sample.rainy);
    for (const char* run : {"a", "b"}) {
      const fs::path o = d / run;
      fs::create_directories(o);
      const auto r = invoke({"infer", "--model", ckpt.string(), "--input", (d / "in.png").string(), "--output",
                           (o / "out.png").string(), "--uncertainty", (o / "u").string()});
      REQUIRE_MESSAGE(r.code == 0, r.err);
    }
    const auto a = snapshot(d / "a");
    CHECK(a == snapshot(d / "b"));
    for (const char* f : {"out.png", "u_alpha.umap", "u_beta.umap", "u_uncertainty.umap", "u_alpha.png",
                          "u_beta.png", "u_uncertainty.png"}) {
      CHECK_MESSAGE(a.count(f) == 1, f);
    }
    const std::string raw = a.at("u_beta.umap");
    CHECK(raw.rfind("UMAP\n24 24\n", 0) == 0);
    CHECK(raw.size() == std::string("UMAP\n24 24\n").size() + 24 * 24 * sizeof(float));
    const auto beta = cli::read_umap(d / "a" / "u_beta.umap");
    CHECK(beta.width == 24);
    CHECK(std::all_of(beta.values.begin(), beta.values.end(), [](float v) { return v > 0.0f; }));
    const auto png = data::read_png(d / "a" / "out.png");
    CHECK(png.shape() == diff::Shape{1, 3, 24, 24});
  }

  TEST_CASE("infer with a size the model cannot take fails with a size hint") {
    const fs::path d = scratch("infer_size");
    const auto ckpt = save_model(d / "m.ckpt", model::Model<float>::build(tiny_config(), 2));
    data::write_png(d / "odd.png", data::procedural_clean(data::Pattern::Gradient, 30, 0));
    const auto r = invoke({"infer", "--model", ckpt.string(), "--input", (d / "odd.png").string(), "--output",
                         (d / "o.png").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("multiples of 4") != std::string::npos);
    CHECK(r.err.find("28x28") != std::string::npos);
    CHECK(r.err.find("32x32") != std::string::npos);
    CHECK(!fs::exists(d / "o.png"));
  }

  TEST_CASE("eval on clean/clean pairs with an identity-zeroed model reports +inf rows") {
    const fs::path d = scratch("eval");
    auto m = model::Model<float>::build(tiny_config(), 3);
    for (auto& h : m.output_heads()) {
      std::fill(h.weight.data().begin(), h.weight.data().end(), 0.0f);
      std::fill(h.bias.data().begin(), h.bias.data().end(), 0.0f);
    }
    const auto ckpt = save_model(d / "id.ckpt", m);
    fs::create_directories(d / "ds" / "rainy");
    fs::create_directories(d / "ds" / "clean");
    for (int i = 0; i < 2; ++i) {
      const auto img = data::procedural_clean(data::Pattern::Checkerboard, 16, static_cast<std::uint64_t>(i));
      data::write_png(d / "ds" / "rainy" / ("p" + std::to_string(i) + ".png"), img);
      data::write_png(d / "ds" / "clean" / ("p" + std::to_string(i) + ".png"), img);
    }
    const auto r = invoke({"eval", "--model", ckpt.string(), "--data", (d / "ds").string(), "--report",
                         (d / "report.txt").string(), "--csv", (d / "report.csv").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string csv = slurp(d / "report.csv");
    CHECK(csv.rfind(eval::kCsvHeader, 0) == 0);
    CHECK(csv.find("\np0,inf,inf,") != std::string::npos);
    CHECK(csv.find("\np1,inf,inf,") != std::string::npos);
    CHECK(slurp(d / "report.txt").find("mean_psnr_output=inf") != std::string::npos);
    CHECK(r.out.find("mean_psnr_output=inf") != std::string::npos);
    const std::string first = slurp(d / "report.txt");
    REQUIRE(invoke({"eval", "--model", ckpt.string(), "--data", (d / "ds").string(), "--report",
                  (d / "report.txt").string()})
                .code == 0);
    CHECK(slurp(d / "report.txt") == first);
  }

  TEST_CASE("UMAP round-trip and min-max preview") {
    const fs::path d = scratch("umap");
    const cli::FloatMap m{3, 2, {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, -1.0f}};
    cli::write_umap(d / "m.umap", m);
    const auto back = cli::read_umap(d / "m.umap");
    CHECK(back.width == 3);
    CHECK(back.height == 2);
    CHECK(back.values == m.values);
    const auto p = cli::preview(m);
    CHECK(p.shape() == diff::Shape{1, 1, 2, 3});
    CHECK(p.data()[5] == 0.0f);
    CHECK(p.data()[4] == 1.0f);
    CHECK(p.data()[0] == doctest::Approx(2.0 / 6.0));
    const auto flat = cli::preview(cli::FloatMap{2, 1, {7.0f, 7.0f}});
    CHECK(flat.data()[0] == 0.0f);
    const std::string bytes = slurp(d / "m.umap");
    std::ofstream(d / "t.umap", std::ios::binary) << bytes.substr(0, bytes.size() - 1);
    CHECK_THROWS_WITH(cli::read_umap(d / "t.umap"), doctest::Contains("truncated"));
    const auto avg = cli::to_float_map(diff::Tensor<float>::from({1, 2, 1, 2}, {1, 2, 3, 6}));
    CHECK(avg.values == std::vector<float>{2.0f, 4.0f});
  }
}
