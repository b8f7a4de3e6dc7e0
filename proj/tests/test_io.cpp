#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "lrp3d/run_config.hpp"
#include "lrp3d/synthetic.hpp"
#include "lrp3d/volume_io.hpp"
#include "support.hpp"

using namespace lrp3d;

namespace {

std::uint64_t format_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_volume(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected a format error");
  return 0;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) { std::memcpy(b.data() + at, &v, 4); }

}  // namespace

TEST_CASE("VOL1 tensors round trip bit for bit") {
  Rng rng(61);
  TensorF t = test::random_tensor<float>({2, 3, 4, 5}, rng);
  t[0] = -0.0f;
  t[1] = std::numeric_limits<float>::quiet_NaN();
  t[2] = std::numeric_limits<float>::infinity();
  t[3] = std::numeric_limits<float>::denorm_min();
  const auto bytes = encode_volume(t);
  REQUIRE(bytes.size() == 4 + 1 + 4 * 4 + 1 + 120 * 4);
  CHECK(std::memcmp(bytes.data(), "VOL1", 4) == 0);
  CHECK(bytes[4] == 4);
  CHECK(bytes[5] == 2);
  CHECK(bytes[21] == 0);
  const TensorF back = std::get<TensorF>(decode_volume(bytes));
  CHECK(back.shape() == t.shape());
  CHECK(std::memcmp(back.data(), t.data(), 120 * sizeof(float)) == 0);
  CHECK(encode_volume(back) == bytes);

  test::TempDir dir("io");
  write_volume(t, dir / "t.vol");
  CHECK(encode_volume(read_tensor(dir / "t.vol")) == bytes);
  CHECK_THROWS_AS(read_mask(dir / "t.vol"), FormatError);
}

TEST_CASE("VOL1 masks round trip") {
  Mask m({3, 4, 5});
  for (std::size_t i = 0; i < m.data.size(); i += 3) m.data[i] = 1;
  const auto bytes = encode_volume(m);
  CHECK(bytes[4 + 1 + 12] == 1);
  CHECK(std::get<Mask>(decode_volume(bytes)) == m);
  test::TempDir dir("io");
  write_volume(m, dir / "m.vol");
  CHECK(read_mask(dir / "m.vol") == m);
  CHECK_THROWS_AS(read_tensor(dir / "m.vol"), FormatError);
}

TEST_CASE("VOL1 decoding errors") {
  const auto good = encode_volume(TensorF::constant({2, 3}, 1.5f));  // header 4 + 1 + 8 + 1 = 14
  SUBCASE("bad magic") {
    auto b = good;
    b[1] = 'X';
    CHECK(format_offset(b) == 0);
  }
  SUBCASE("truncated payload") {
    auto b = good;
    b.resize(b.size() - 1);
    CHECK(format_offset(b) == 14);
    b.resize(7);
    CHECK_THROWS_AS(decode_volume(b), FormatError);
  }
  SUBCASE("declared dims exceed the payload") {
    auto b = good;
    put_u32(b, 5, 1000);
    CHECK_THROWS_AS(decode_volume(b), FormatError);
  }
  SUBCASE("dimension product overflow") {
    std::vector<std::uint8_t> b{'V', 'O', 'L', '1', 5};
    for (int i = 0; i < 5; ++i)
      for (int k = 0; k < 4; ++k) b.push_back(0xFF);
    b.push_back(0);
    CHECK_THROWS_AS(decode_volume(b), FormatError);
  }
  SUBCASE("rank, zero dims, dtype, trailing bytes, mask values") {
    auto b = good;
    b[4] = 0;
    CHECK(format_offset(b) == 5);
    b = good;
    put_u32(b, 9, 0);
    CHECK_THROWS_AS(decode_volume(b), FormatError);
    b = good;
    b[13] = 7;
    CHECK(format_offset(b) == 13);
    b = good;
    b.push_back(0);
    CHECK_THROWS_AS(decode_volume(b), FormatError);
    auto mb = encode_volume(Mask({4}));
    mb[mb.size() - 2] = 2;
    CHECK(format_offset(mb) == mb.size() - 2);
  }
  SUBCASE("missing file") { CHECK_THROWS(read_volume("/nonexistent/dir/x.vol")); }
}

TEST_CASE("slice rendering") {
  SUBCASE("all-zero slice renders black") {
    const Image img = render_signed_slice(TensorF({2, 3, 4}), 1);
    CHECK(img.width == 4);
    CHECK(img.height == 3);
    for (auto p : img.pixels) CHECK(p == 0);
    for (auto p : render_gray_slice(TensorF::constant({2, 3, 4}, 0.7f), 0).pixels) CHECK(p == 0);
  }
  SUBCASE("signed ramp") {
    TensorF v({1, 2, 2});
    v[0] = 2.0f;
    v[1] = -1.0f;
    v[3] = 0.5f;
    const Image img = render_signed_slice(v, 0);
    CHECK(img.at(0, 0, 0) == 255);
    CHECK(img.at(0, 0, 1) == 0);
    CHECK(img.at(0, 0, 2) == 0);
    CHECK(img.at(1, 0, 2) == 128);
    CHECK(img.at(1, 0, 0) == 0);
    CHECK(img.at(0, 1, 0) == 0);
    CHECK(img.at(1, 1, 0) == 64);
  }
  SUBCASE("grayscale min-max") {
    TensorF v({1, 1, 3});
    v[0] = -1.0f;
    v[1] = 0.0f;
    v[2] = 3.0f;
    const Image img = render_gray_slice(v.reshaped({1, 1, 1, 3}), 0);
    CHECK(img.pixels == std::vector<std::uint8_t>{0, 64, 255});
  }
  SUBCASE("zero heatmap overlay halves the base") {
    Rng rng(62);
    const TensorF base = test::random_tensor<float>({3, 4, 5}, rng);
    const Image gray = render_gray_slice(base, 2);
    const Image over = render_overlay_slice(TensorF({3, 4, 5}), base, 2);
    for (Index i = 0; i < 20; ++i)
      for (int c = 0; c < 3; ++c) CHECK(over.pixels[static_cast<std::size_t>(i * 3 + c)] == gray.pixels[static_cast<std::size_t>(i)] / 2);
    CHECK_THROWS_AS(render_overlay_slice(TensorF({3, 4, 6}), base, 0), DimensionError);
  }
  SUBCASE("depth out of range") {
    CHECK_THROWS_AS(render_signed_slice(TensorF({2, 3, 4}), 2), DimensionError);
    CHECK_THROWS_AS(render_gray_slice(TensorF({2, 3, 4}), -1), DimensionError);
  }
  SUBCASE("PNM headers") {
    const Image rgb{2, 1, 3, {1, 2, 3, 4, 5, 6}};
    const auto b = encode_pnm(rgb);
    const std::string head(b.begin(), b.begin() + 11);
    CHECK(head == "P6\n2 1\n255\n");
    CHECK(b.size() == 11 + 6);
    const auto g = encode_pnm(Image{3, 2, 1, std::vector<std::uint8_t>(6, 9)});
    CHECK(std::string(g.begin(), g.begin() + 11) == "P5\n3 2\n255\n");
    test::TempDir dir("img");
    export_slice(TensorF({2, 3, 4}), 0, dir / "s.pgm", SliceMode::Unsigned);
    CHECK(std::filesystem::file_size(dir / "s.pgm") == 11 + 12);
  }
}

TEST_CASE("synthetic generator") {
  const Shape small{6, 8, 16, 16};
  SUBCASE("deterministic per seed and index") {
    const Dataset a = gen_synthetic(7, 3, small);
    const Dataset b = gen_synthetic(7, 3, small);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a[i].x == b[i].x);
      CHECK(a[i].mask == b[i].mask);
    }
    CHECK(a[0].id == "case_000");
    CHECK(a[2].id == "case_002");
    CHECK(gen_synthetic_case(7, 1, small).x == a[1].x);
    CHECK(!(gen_synthetic(8, 1, small)[0].x == a[0].x));
  }
  SUBCASE("contract over many seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Case c = gen_synthetic_case(seed, 0, small);
      REQUIRE(c.x.shape() == small);
      REQUIRE(c.mask.shape == Shape{8, 16, 16});
      const double frac = static_cast<double>(c.mask.count()) / static_cast<double>(c.mask.size());
      REQUIRE(frac >= kMinLesionFraction);
      REQUIRE(frac <= kMaxLesionFraction);
      REQUIRE(c.x.vec().minCoeff() >= 0.0f);
      REQUIRE(c.x.vec().maxCoeff() <= 1.0f);
    }
  }
  SUBCASE("default shape and per-modality lesion contrast") {
    const Case c = gen_synthetic_case(7, 0);
    CHECK(c.x.shape() == kDefaultCaseShape);
    CHECK(kModalityNames.size() == 6);
    const std::array<double, 6> sign{-1, 1, -1, -1, 1, 1};
    std::vector<double> contrast;
    for (Index ch = 0; ch < 6; ++ch) {
      const TensorF x = c.x.channel(ch);
      double in = 0.0, out = 0.0;
      for (Index i = 0; i < x.size(); ++i) (c.mask.data[static_cast<std::size_t>(i)] ? in : out) += x[i];
      const double d = in / static_cast<double>(c.mask.count()) - out / static_cast<double>(x.size() - c.mask.count());
      CHECK(d * sign[static_cast<std::size_t>(ch)] > 0.1);
      contrast.push_back(d);
    }
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i + 1; j < 6; ++j) CHECK(contrast[i] != contrast[j]);
  }
  SUBCASE("invalid shapes") {
    CHECK_THROWS_AS(gen_synthetic_case(1, 0, {6, 7, 16, 16}), DimensionError);
    CHECK_THROWS_AS(gen_synthetic_case(1, 0, {6, 16, 16}), DimensionError);
    CHECK_THROWS_AS(gen_synthetic(1, 0, small), ConfigError);
  }
  SUBCASE("dataset directory round trip") {
    test::TempDir dir("data");
    const Dataset a = gen_synthetic(9, 2, small);
    save_dataset(a, dir.path().string());
    CHECK(std::filesystem::exists(dir / "case_001_x.vol"));
    CHECK(std::filesystem::exists(dir / "case_001_mask.vol"));
    const Dataset b = load_dataset(dir.path().string());
    REQUIRE(b.size() == 2);
    CHECK(b[1].id == "case_001");
    CHECK(b[1].x == a[1].x);
    CHECK(b[1].mask == a[1].mask);
    test::TempDir empty("empty");
    CHECK_THROWS_AS(load_dataset(empty.path().string()), FormatError);
  }
}

TEST_CASE("run configuration") {
  const std::string text = R"({
    "model": {"depth": 2, "base_filters": 8, "in_channels": 6, "out_channels": 1},
    "train": {"epochs": 5, "lr": 0.02, "momentum": 0.8, "seed": 11},
    "lrp": {"seed": "full_output", "eps_stab": 1e-8},
    "filters": ["pass:0.0:0.4", "clamp:0.2@layer=3"],
    "metrics": {"theta_input": 0.4, "sweep_kind": "clamp", "alphas": [0.2, 0.6]},
    "paths": {"data": "d", "weights": "w.nnw", "out": "o"}
  })";
  const RunConfig cfg = RunConfig::from_json(text);
  CHECK(cfg.model.base_filters == 8);
  CHECK(cfg.train.epochs == 5);
  CHECK(cfg.train.seed == 11);
  CHECK(cfg.seed_mode == RunConfig::SeedMode::FullOutput);
  CHECK(cfg.filters.size() == 2);
  CHECK(cfg.filter_plan().at(3) == FilterSpec::clamp(0.2));
  CHECK(cfg.filter_plan().at(kFinalInsertion) == FilterSpec::pass(0.0, 0.4));
  CHECK(cfg.sweep_filters() == std::vector<FilterSpec>{FilterSpec::clamp(0.2), FilterSpec::clamp(0.6)});
  CHECK(cfg.metrics_options().eps == 1e-8);
  CHECK(cfg.metrics_options().seed.kind == SeedSpec::Kind::FullOutput);
  CHECK(cfg.data_dir == "d");

  const RunConfig again = RunConfig::from_json(cfg.to_json());
  CHECK(again.to_json() == cfg.to_json());
  CHECK(again.model == cfg.model);

  CHECK(RunConfig::from_json("{}").train.epochs == 80);
  for (const char* bad : {R"({"modle": {}})", R"({"train": {"epoch": 3}})", R"({"lrp": {"seed": "everything"}})",
                          R"({"filters": ["pass:0.5:0.1"]})", R"({"filters": "clamp:0.2"})",
                          R"({"metrics": {"theta_lrp": 2}})", R"({"paths": {"data": 3}})", R"({"model": {"depth": 0}})",
                          "not json"})
    CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"filters": ["clamp:0.2", "pass:0.4"]})").filter_plan(), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/run.json"), ConfigError);
}
