#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "umff/blocks.hpp"

using namespace umff;
using namespace umff::blocks;
using TD = diff::Tensor<double>;
using diff::Shape;
using Store = ParameterStore<double>;
namespace d = umff::diff;

namespace {

void fill_params(Store& store, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& e : store.entries())
    for (auto& v : e.tensor.data()) v = u(rng);
}

void zero_params(Store& store, std::string_view prefix = "") {
  for (auto& e : store.entries())
    if (e.name.starts_with(prefix))
      for (auto& v : e.tensor.data()) v = 0.0;
}

double max_diff(const TD& a, const TD& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Straight-line conv from named parameters.
TD conv(const Store& s, const std::string& name, const TD& x, int pad) {
  return d::conv2d(x, s.get(name + ".weight"), s.get(name + ".bias"), 1, pad);
}

bool all_finite(const TD& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

// Runs a sum loss and reports which parameters received an all-zero gradient.
std::vector<std::string> dead_params(Store& store, const std::function<TD()>& fwd) {
  store.zero_grad();
  d::Tape<double> tape;
  d::TapeScope<double> scope(tape);
  TD l = testing::weighted_sum(fwd(), 77);
  d::backward(l, tape);
  std::vector<std::string> dead;
  for (const auto& e : store.entries()) {
    bool any = false;
    if (e.tensor.has_grad())
      for (double g : e.tensor.grad()) any |= g != 0.0;
    if (!any) dead.push_back(e.name);
  }
  return dead;
}

}  // namespace

TEST_SUITE("rab") {
  TEST_CASE("zero parameters give the identity and zero input gives zero") {
    std::mt19937_64 rng(1);
    Store s;
    auto b = make_residual_block(s, "enc1.rab0", 4, true, rng);
    zero_params(s);
    TD x = testing::random_tensor({2, 4, 5, 5}, rng);
    CHECK(max_diff(rab_forward(b, x), x) == 0.0);
    fill_params(s, rng);
    zero_params(s, "enc1.rab0.conv1.bias");
    zero_params(s, "enc1.rab0.conv2.bias");
    zero_params(s, "enc1.rab0.gate.bias");
    TD z = TD::zeros({1, 4, 3, 3});
    CHECK(max_diff(rab_forward(b, z), z) == 0.0);
  }

  TEST_CASE("matches the reference wiring") {
    std::mt19937_64 rng(2);
    for (bool attention : {true, false}) {
      Store s;
      auto b = make_residual_block(s, "r", 3, attention, rng);
      fill_params(s, rng);
      TD x = testing::random_tensor({2, 3, 6, 5}, rng);
      TD x1 = conv(s, "r.conv2", d::relu(conv(s, "r.conv1", x, 1)), 1);
      TD want = attention ? d::add(x, d::mul(x1, conv(s, "r.gate", d::global_avg_pool(x1), 0))) : d::add(x, x1);
      CHECK(max_diff(rab_forward(b, x), want) < 1e-6);
    }
  }

  TEST_CASE("rejects channel mismatch and names parameters hierarchically") {
    std::mt19937_64 rng(3);
    Store s;
    auto b = make_residual_block(s, "enc1.rab3", 4, true, rng);
    CHECK(s.contains("enc1.rab3.conv2.weight"));
    CHECK(s.contains("enc1.rab3.gate.bias"));
    CHECK_THROWS_AS(rab_forward(b, TD::zeros({1, 3, 4, 4})), std::invalid_argument);
    Store plain;
    make_residual_block(plain, "x", 4, false, rng);
    CHECK_FALSE(plain.contains("x.gate.weight"));
    CHECK(plain.total_count() < s.total_count());
  }
}

TEST_SUITE("sffb") {
  TEST_CASE("closed image gate with identity skip is the identity") {
    std::mt19937_64 rng(4);
    Store s;
    auto b = make_sffb(s, "sffb2", 3, rng);
    fill_params(s, rng);
    zero_params(s, "sffb2.gate_image");
    zero_params(s, "sffb2.skip");
    for (int c = 0; c < 3; ++c) b.skip.weight.data()[c * 3 + c] = 1.0;
    TD f = testing::random_tensor({1, 3, 4, 4}, rng);
    TD img = testing::random_tensor({1, 3, 4, 4}, rng, 0, 1);
    CHECK(max_diff(sffb_forward(b, f, img), f) < 1e-15);
  }

  TEST_CASE("zero features give constant bias-driven maps") {
    std::mt19937_64 rng(5);
    Store s;
    auto b = make_sffb(s, "s", 2, rng);
    fill_params(s, rng);
    zero_params(s, "s.image_conv");
    TD out = sffb_forward(b, TD::zeros({1, 2, 3, 3}), testing::random_tensor({1, 3, 3, 3}, rng, 0, 1));
    for (int c = 0; c < 2; ++c)
      for (int i = 1; i < 9; ++i) CHECK(out.data()[c * 9 + i] == doctest::Approx(out.data()[c * 9]));
  }

  TEST_CASE("matches the reference wiring and rejects misaligned inputs") {
    std::mt19937_64 rng(6);
    Store s;
    auto b = make_sffb(s, "s", 4, rng);
    fill_params(s, rng);
    TD f = testing::random_tensor({2, 4, 4, 6}, rng);
    TD img = testing::random_tensor({2, 3, 4, 6}, rng, 0, 1);
    TD sv = conv(s, "s.image_conv", img, 1);
    TD want = d::add(d::mul(conv(s, "s.gate_feat", f, 0), conv(s, "s.gate_image", sv, 0)), conv(s, "s.skip", f, 0));
    CHECK(max_diff(sffb_forward(b, f, img), want) < 1e-6);
    CHECK_THROWS_AS(sffb_forward(b, f, TD::zeros({2, 3, 4, 4})), std::invalid_argument);
  }
}

TEST_SUITE("mfb") {
  TEST_CASE("output shapes at each target level and reference wiring") {
    std::mt19937_64 rng(7);
    const int c = 2;
    EncoderFeatures<double> enc{testing::random_tensor({2, c, 8, 8}, rng),
                                testing::random_tensor({2, 2 * c, 4, 4}, rng),
                                testing::random_tensor({2, 4 * c, 2, 2}, rng)};
    for (int level = 0; level < 3; ++level) {
      Store s;
      auto b = make_mfb(s, "m", c, level, rng);
      fill_params(s, rng);
      TD out = mfb_forward(b, enc);
      CHECK(out.shape() == Shape{2, c << level, 8 >> level, 8 >> level});
      std::vector<TD> parts;
      for (int k = 0; k < 3; ++k) {
        TD e = enc[k];
        for (int l = k; l < level; ++l) e = d::downsample_avg2(e);
        for (int l = k; l > level; --l) e = d::upsample_bilinear2(e);
        parts.push_back(e);
      }
      TD want = conv(s, "m.refine", conv(s, "m.fuse", d::concat_channels(parts), 0), 1);
      CHECK(max_diff(out, want) < 1e-6);
    }
  }

  TEST_CASE("zero encoder features propagate biases only") {
    std::mt19937_64 rng(8);
    Store s;
    auto b = make_mfb(s, "m", 1, 2, rng);
    fill_params(s, rng);
    EncoderFeatures<double> enc{TD::zeros({1, 1, 8, 8}), TD::zeros({1, 2, 4, 4}), TD::zeros({1, 4, 2, 2})};
    TD out = mfb_forward(b, enc);
    CHECK(out.shape() == Shape{1, 4, 2, 2});
    // fuse output is its bias; the 3x3 refine sees a constant map with zero padding.
    TD fused = TD::zeros({1, 4, 2, 2});
    for (int ch = 0; ch < 4; ++ch)
      for (int i = 0; i < 4; ++i) fused.data()[ch * 4 + i] = s.get("m.fuse.bias").data()[ch];
    CHECK(max_diff(out, conv(s, "m.refine", fused, 1)) < 1e-12);
  }

  TEST_CASE("inconsistent batches are rejected") {
    std::mt19937_64 rng(9);
    Store s;
    auto b = make_mfb(s, "m", 1, 0, rng);
    EncoderFeatures<double> enc{TD::zeros({1, 1, 8, 8}), TD::zeros({2, 2, 4, 4}), TD::zeros({1, 4, 2, 2})};
    CHECK_THROWS_AS(mfb_forward(b, enc), std::invalid_argument);
  }
}

TEST_SUITE("uncertainty head") {
  TEST_CASE("zero weights give bias constants") {
    std::mt19937_64 rng(10);
    Store s;
    auto h = make_uncertainty_head(s, "ue_beta", 3, rng, 1.25);
    for (auto& e : s.entries())
      if (e.name.ends_with(".weight"))
        for (auto& v : e.tensor.data()) v = 0.0;
    s.get("ue_beta.conv2.bias").data()[1] = -0.7;
    s.get("ue_beta.conv2.bias").data()[2] = 0.4;
    auto out = uncertainty_head_forward(h, testing::random_tensor({1, 3, 5, 4}, rng));
    CHECK(out.raw.shape() == Shape{1, 1, 5, 4});
    CHECK(out.tap.shape() == Shape{1, 3, 5, 4});
    for (double v : out.raw.data()) CHECK(v == 1.25);
    for (int i = 0; i < 20; ++i) {
      CHECK(out.tap.data()[i] == 0.0);
      CHECK(out.tap.data()[20 + i] == 0.0);
      CHECK(out.tap.data()[40 + i] == 0.4);
    }
  }

  TEST_CASE("matches the reference wiring") {
    std::mt19937_64 rng(11);
    Store s;
    auto h = make_uncertainty_head(s, "u", 4, rng);
    fill_params(s, rng);
    TD x = testing::random_tensor({2, 4, 6, 6}, rng);
    TD tap = d::relu(conv(s, "u.conv2", d::relu(conv(s, "u.conv1", x, 1)), 1));
    auto out = uncertainty_head_forward(h, x);
    CHECK(max_diff(out.tap, tap) < 1e-6);
    CHECK(max_diff(out.raw, conv(s, "u.conv3", tap, 1)) < 1e-6);
  }
}

TEST_SUITE("uffb") {
  TEST_CASE("zero fusion weights give the identity for every variant") {
    std::mt19937_64 rng(12);
    for (auto v : {UffbVariant::B1, UffbVariant::B2, UffbVariant::B3}) {
      Store s;
      auto b = make_uffb(s, "uffb", 3, v, rng);
      fill_params(s, rng);
      zero_params(s, "uffb.fuse");
      TD f = testing::random_tensor({1, 3, 4, 4}, rng);
      TD out = uffb_forward(b, f, testing::random_tensor({1, 3, 4, 4}, rng), testing::random_tensor({1, 3, 4, 4}, rng));
      CHECK(max_diff(out, f) == 0.0);
    }
  }

  TEST_CASE("B3 with zero taps and zero feature projection adds bias maps") {
    std::mt19937_64 rng(13);
    Store s;
    auto b = make_uffb(s, "uffb", 2, UffbVariant::B3, rng);
    fill_params(s, rng);
    zero_params(s, "uffb.proj_f");
    TD f = testing::random_tensor({1, 2, 3, 3}, rng);
    TD z = TD::zeros({1, 2, 3, 3});
    TD out = uffb_forward(b, f, z, z);
    TD delta = d::sub(out, f);
    for (int c = 0; c < 2; ++c)
      for (int i = 1; i < 9; ++i) CHECK(delta.data()[c * 9 + i] == doctest::Approx(delta.data()[c * 9]).epsilon(1e-12));
  }

  TEST_CASE("each variant matches its reference wiring") {
    std::mt19937_64 rng(14);
    TD f = testing::random_tensor({2, 3, 4, 5}, rng);
    TD ta = testing::random_tensor({2, 3, 4, 5}, rng, 0, 1);
    TD tb = testing::random_tensor({2, 3, 4, 5}, rng, 0, 1);
    for (auto v : {UffbVariant::B1, UffbVariant::B2, UffbVariant::B3}) {
      Store s;
      auto b = make_uffb(s, "u", 3, v, rng);
      fill_params(s, rng);
      TD inner;
      if (v == UffbVariant::B1) {
        inner = d::concat_channels<double>({f, ta, tb});
      } else {
        TD pf = conv(s, "u.proj_f", f, 0), pa = conv(s, "u.proj_alpha", ta, 0), pb = conv(s, "u.proj_beta", tb, 0);
        inner = v == UffbVariant::B2 ? d::concat_channels<double>({pf, pa, pb}) : d::add(d::add(pf, pa), pb);
      }
      CHECK(max_diff(uffb_forward(b, f, ta, tb), d::add(f, conv(s, "u.fuse", inner, 0))) < 1e-6);
    }
  }

  TEST_CASE("variant parsing and misaligned taps") {
    CHECK(parse_uffb_variant("B2") == UffbVariant::B2);
    CHECK_THROWS_AS(parse_uffb_variant("B4"), std::invalid_argument);
    std::mt19937_64 rng(15);
    Store s;
    auto b = make_uffb(s, "u", 2, UffbVariant::B3, rng);
    CHECK_THROWS_AS(uffb_forward(b, TD::zeros({1, 2, 4, 4}), TD::zeros({1, 2, 4, 4}), TD::zeros({1, 2, 2, 4})),
                    std::invalid_argument);
  }
}

TEST_CASE("every block keeps outputs finite, preserves batch and space, and feeds every parameter") {
  std::mt19937_64 rng(16);
  const Shape sh{2, 3, 4, 4};
  TD x = testing::random_tensor(sh, rng);
  TD img = testing::random_tensor({2, 3, 4, 4}, rng, 0, 1);
  {
    Store s;
    auto b = make_residual_block(s, "r", 3, true, rng);
    fill_params(s, rng);
    TD y = rab_forward(b, x);
    CHECK(y.shape() == sh);
    CHECK(all_finite(y));
    CHECK(dead_params(s, [&] { return rab_forward(b, x); }).empty());
  }
  {
    Store s;
    auto b = make_sffb(s, "s", 3, rng);
    fill_params(s, rng);
    CHECK(sffb_forward(b, x, img).shape() == sh);
    CHECK(dead_params(s, [&] { return sffb_forward(b, x, img); }).empty());
  }
  {
    Store s;
    auto h = make_uncertainty_head(s, "u", 3, rng);
    fill_params(s, rng);
    CHECK(dead_params(s, [&] {
            auto o = uncertainty_head_forward(h, x);
            return d::add(d::sum(o.raw), d::sum(o.tap));
          }).empty());
  }
  for (auto v : {UffbVariant::B1, UffbVariant::B2, UffbVariant::B3}) {
    Store s;
    auto b = make_uffb(s, "f", 3, v, rng);
    fill_params(s, rng);
    TD ta = testing::random_tensor(sh, rng, 0, 1);
    CHECK(uffb_forward(b, x, ta, ta).shape() == sh);
    CHECK(dead_params(s, [&] { return uffb_forward(b, x, ta, ta); }).empty());
  }
  for (int level = 0; level < 3; ++level) {
    Store s;
    auto b = make_mfb(s, "m", 1, level, rng);
    fill_params(s, rng);
    EncoderFeatures<double> enc{testing::random_tensor({2, 1, 8, 8}, rng), testing::random_tensor({2, 2, 4, 4}, rng),
                                testing::random_tensor({2, 4, 2, 2}, rng)};
    TD y = mfb_forward(b, enc);
    CHECK(y.shape().n == 2);
    CHECK(all_finite(y));
    CHECK(dead_params(s, [&] { return mfb_forward(b, enc); }).empty());
  }
}

TEST_CASE("parameter names are stable across constructions") {
  auto names = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Store s;
    make_residual_block(s, "enc1.rab0", 4, true, rng);
    make_sffb(s, "sffb2", 4, rng);
    make_mfb(s, "mfb1", 2, 0, rng);
    make_uncertainty_head(s, "ue_alpha", 4, rng);
    make_uffb(s, "uffb", 4, UffbVariant::B3, rng);
    std::vector<std::string> out;
    for (const auto& e : s.entries()) out.push_back(e.name);
    return out;
  };
  CHECK(names(1) == names(2));
  std::mt19937_64 rng(1);
  Store s;
  make_conv(s, "dup", 1, 1, 1, rng);
  CHECK_THROWS_AS(make_conv(s, "dup", 1, 1, 1, rng), std::invalid_argument);
}
