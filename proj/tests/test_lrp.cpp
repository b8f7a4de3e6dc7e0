#include <doctest.h>

#include "lrp3d/lrp.hpp"
#include "support.hpp"

using namespace lrp3d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TensorD input_case(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  return test::random_tensor<double>(shape, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("seed relevance") {
  TensorF out = TensorF::constant({1, 2, 2, 2}, 0.1f);
  SUBCASE("nothing above threshold warns and yields zeros") {
    const auto s = seed_relevance(out, SeedSpec::predicted_positive());
    CHECK(s.warning);
    CHECK(s.relevance.max_abs() == 0.0f);
  }
  SUBCASE("single positive voxel keeps its probability") {
    out[5] = 0.9f;
    const auto s = seed_relevance(out, SeedSpec::predicted_positive());
    CHECK(!s.warning);
    CHECK(s.relevance[5] == 0.9f);
    CHECK(s.relevance.sum() == doctest::Approx(0.9));
  }
  SUBCASE("full output and masked seeds") {
    CHECK(seed_relevance(out, SeedSpec::full_output()).relevance == out);
    Mask m({2, 2, 2});
    m.data[3] = 1;
    const auto s = seed_relevance(out, SeedSpec::masked_by(m));
    CHECK(s.relevance[3] == 0.1f);
    CHECK(s.relevance.sum() == doctest::Approx(0.1));
    CHECK_THROWS_AS(seed_relevance(out, SeedSpec::masked_by(Mask({2, 2, 3}))), DimensionError);
  }
}

TEST_CASE("z+ rule examples") {
  CHECK(relprop_zplus<double>(vec({1}), MatrixXd::Constant(1, 1, 1.0), vec({5}))[0] == doctest::Approx(5.0));

  MatrixXd w(2, 1);
  w << 1, 3;
  const VectorXd r = relprop_zplus<double>(vec({1, 1}), w, vec({4}));
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(r[1] == doctest::Approx(3.0));

  w << 1, -1;
  const VectorXd r2 = relprop_zplus<double>(vec({1, 1}), w, vec({2}));
  CHECK(r2[0] == doctest::Approx(2.0));
  CHECK(r2[1] == 0.0);

  AbsorptionStats stats;
  w << -1, -2;
  CHECK(relprop_zplus<double>(vec({1, 1}), w, vec({2}), kDefaultLrpEps, &stats).norm() == 0.0);
  CHECK(stats.units == 1);
  CHECK(stats.mass == 2.0);
  CHECK_THROWS_AS(relprop_zplus<double>(vec({1}), w, vec({2})), DimensionError);
}

TEST_CASE("conv relevance") {
  SUBCASE("unit 1x1x1 kernel passes relevance through") {
    Conv3d<double> c{TensorD::constant({1, 1, 1, 1, 1}, 1.0), TensorD({1}), 1, 0};
    const TensorD a = input_case({1, 3, 3, 3}, 1);
    const TensorD r = input_case({1, 3, 3, 3}, 2);
    const TensorD out = relprop_conv3d(a, c, r);
    CHECK((out.vec() - r.vec()).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("matches the dense-matrix oracle") {
    Rng rng(3);
    for (int stride : {1, 2}) {
      Conv3d<double> c{test::random_tensor<double>({3, 2, 3, 3, 3}, rng), TensorD({3}), stride, 1};
      const TensorD a = input_case({2, 4, 4, 4}, 4);
      const Shape out = conv3d_output_shape(a.shape(), c.weight.shape(), stride, 1);
      const TensorD r = input_case(out, 5);
      const VectorXd oracle = relprop_zplus<double>(a.vec(), test::dense_conv_matrix(a.shape(), c.weight, stride, 1), r.vec());
      CHECK((relprop_conv3d(a, c, r).vec() - oracle).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
  SUBCASE("all-negative kernel absorbs everything") {
    Rng rng(6);
    Conv3d<double> c{test::random_tensor<double>({2, 2, 3, 3, 3}, rng, -1.0, -0.1), TensorD({2}), 1, 1};
    const TensorD a = input_case({2, 4, 4, 4}, 7);
    const TensorD r = input_case({2, 4, 4, 4}, 8);
    AbsorptionStats stats;
    CHECK(relprop_conv3d(a, c, r, kDefaultLrpEps, &stats).max_abs() == 0.0);
    CHECK(stats.units == r.size());
    CHECK(stats.mass == doctest::Approx(r.sum_double()));
  }
}

TEST_CASE("upconv relevance matches the dense-matrix oracle") {
  Rng rng(9);
  UpConv3d<double> u{test::random_tensor<double>({2, 3, 2, 2, 2}, rng), TensorD({3}), 2};
  const TensorD a = input_case({2, 3, 2, 4}, 10);
  const TensorD r = input_case(upconv3d_output_shape(a.shape(), u.weight.shape(), 2), 11);
  const VectorXd oracle = relprop_zplus<double>(a.vec(), test::dense_upconv_matrix(a.shape(), u.weight, 2), r.vec());
  AbsorptionStats stats;
  const TensorD got = relprop_upconv3d(a, u, r, kDefaultLrpEps, &stats);
  CHECK((got.vec() - oracle).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(got.sum_double() + stats.mass == doctest::Approx(r.sum_double()).epsilon(1e-6));
}

TEST_CASE("max-pool relevance") {
  SUBCASE("ties route to the lowest index") {
    const auto p = maxpool3d(TensorD::constant({1, 2, 2, 2}, 1.0));
    const TensorD r = relprop_maxpool(p.winners, TensorD::constant({1, 1, 1, 1}, 4.0), {1, 2, 2, 2});
    CHECK(r[0] == 4.0);
    CHECK(r.sum_double() == 4.0);
  }
  SUBCASE("two windows") {
    TensorD x({1, 2, 2, 4});
    for (Index i = 0; i < x.size(); ++i) x[i] = static_cast<double>((i * 7) % 16);
    const auto p = maxpool3d(x);
    TensorD rn({1, 1, 1, 2});
    rn[0] = 2.0;
    rn[1] = 3.0;
    const TensorD r = relprop_maxpool(p.winners, rn, x.shape());
    Index nonzero = 0;
    for (Index i = 0; i < r.size(); ++i) nonzero += r[i] != 0.0;
    CHECK(nonzero == 2);
    CHECK(r[p.winners[0]] == 2.0);
    CHECK(r[p.winners[1]] == 3.0);
  }
  SUBCASE("sum is conserved exactly") {
    const TensorD x = input_case({2, 5, 4, 3}, 12);
    const auto p = maxpool3d(x);
    const TensorD rn = input_case(p.output.shape(), 13);
    CHECK(relprop_maxpool(p.winners, rn, x.shape()).sum_double() == doctest::Approx(rn.sum_double()).epsilon(1e-15));
  }
}

TEST_CASE("concat split") {
  const TensorD r = input_case({5, 2, 3, 2}, 14);
  const auto [a, b] = relprop_concat_split(r, {2, 2, 3, 2}, {3, 2, 3, 2});
  CHECK(a.shape() == Shape{2, 2, 3, 2});
  CHECK(a.channel(0) == r.channel(0));
  CHECK(a.channel(1) == r.channel(1));
  CHECK(b.channel(0) == r.channel(2));
  CHECK(b.channel(2) == r.channel(4));
  CHECK(a.sum_double() + b.sum_double() == doctest::Approx(r.sum_double()).epsilon(1e-15));
  CHECK_THROWS_AS(relprop_concat_split(r, {2, 2, 3, 2}, {2, 2, 3, 2}), DimensionError);
  CHECK(relprop_passthrough(r) == r);
}

TEST_CASE("three-layer chain conserves relevance") {
  Rng rng(15);
  Network<double> net;
  net.in_channels = 2;
  net.layers.push_back(Conv3d<double>{test::random_tensor<double>({3, 2, 3, 3, 3}, rng, -0.2, 1.0), TensorD({3}), 1, 1});
  net.layers.push_back(ReLU{});
  net.layers.push_back(Conv3d<double>{test::random_tensor<double>({1, 3, 3, 3, 3}, rng, -0.2, 1.0), TensorD({1}), 1, 1});
  const auto fwd = forward(net, input_case({2, 5, 5, 5}, 16));
  const auto map = run_lrp(net, fwd.cache, SeedSpec::full_output());
  CHECK(map.input.sum_double() + map.absorbed.mass == doctest::Approx(map.output.sum_double()).epsilon(1e-9));
}

TEST_CASE("run_lrp on a bias-free U-Net") {
  const auto net = test::seeded_unet<double>(test::small_config(2, 4, {6, 7, 10, 9}), 0);
  const auto fwd = forward(net, input_case({6, 7, 10, 9}, 17));
  const auto map = run_lrp(net, fwd.cache, SeedSpec::full_output());
  const double total = map.output.sum_double();
  REQUIRE(map.layers.size() == static_cast<std::size_t>(net.size()));

  SUBCASE("relevance in flight is conserved at every layer") {
    double absorbed = 0.0;
    for (const auto& l : map.layers) {
      absorbed += l.absorbed.mass;
      CHECK(std::abs(l.in_flight + absorbed - total) <= 1e-4 * total);
    }
    CHECK(std::abs(map.input.sum_double() + map.absorbed.mass - total) <= 1e-4 * total);
    CHECK(map.input.vec().minCoeff() >= 0.0);
    CHECK(map.layers.front().layer_id == net.size() - 1);
    CHECK(map.layers.back().layer_id == 0);
  }
  SUBCASE("full pass filter is the identity") {
    const auto filtered = run_lrp(net, fwd.cache, SeedSpec::full_output(), {{kFinalInsertion, FilterSpec::pass(0.0, 1.0)}});
    CHECK(filtered.input == map.input);
  }
  SUBCASE("final clamp caps each channel at 0.2 of its peak") {
    const auto clamped = run_lrp(net, fwd.cache, SeedSpec::full_output(), {{kFinalInsertion, FilterSpec::clamp(0.2)}});
    for (Index c = 0; c < 6; ++c) {
      const double raw = map.input.channel(c).max_abs();
      REQUIRE(raw > 0.0);
      CHECK(clamped.input.channel(c).max_abs() == doctest::Approx(0.2 * raw).epsilon(1e-12));
    }
  }
  SUBCASE("per-layer filters act at their layer") {
    const FilterPlan plan{{16, FilterSpec::pass(0.0, 0.5)}};
    const auto filtered = run_lrp(net, fwd.cache, SeedSpec::full_output(), plan);
    const TensorD& r = filtered.at(16).relevance;
    for (Index c = 0; c < r.channels(); ++c) {
      const TensorD ch = normalize_abs(r.channel(c));
      CHECK(ch.max_abs() <= 1.0);
      const TensorD before = normalize_abs(map.at(16).relevance.channel(c));
      // surviving voxels were at most half of the unfiltered channel peak
      for (Index i = 0; i < ch.size(); ++i)
        if (r.channel(c)[i] != 0.0) CHECK(std::abs(before[i]) <= 0.5 + 1e-12);
    }
    CHECK(!(filtered.input == map.input));
    CHECK(filtered.at(17).relevance == map.at(17).relevance);
  }
  SUBCASE("determinism and options") {
    const auto again = run_lrp(net, fwd.cache, SeedSpec::full_output());
    CHECK(again.input == map.input);
    for (std::size_t i = 0; i < map.layers.size(); ++i) CHECK(again.layers[i].relevance == map.layers[i].relevance);
    const auto lean = run_lrp(net, fwd.cache, SeedSpec::full_output(), {}, {kDefaultLrpEps, false});
    CHECK(lean.input == map.input);
    CHECK(lean.layers[3].relevance.empty());
    CHECK_THROWS_AS(run_lrp(net, fwd.cache, SeedSpec::full_output(), {{99, FilterSpec::clamp(0.2)}}), ConfigError);
    CHECK_THROWS_AS(run_lrp(net, fwd.cache, SeedSpec::full_output(), {{3, FilterSpec{FilterSpec::Kind::Pass, 0.6, 0.2}}}),
                    ConfigError);
    const auto other = test::seeded_unet<double>(test::small_config(1, 4, {6, 7, 10, 9}), 0);
    CHECK_THROWS_AS(run_lrp(other, fwd.cache, SeedSpec::full_output()), CacheError);
  }
}

TEST_CASE("normalize_abs") {
  TensorD r({4});
  r[0] = -2.0;
  r[1] = 1.0;
  const TensorD n = normalize_abs(r);
  CHECK(n[0] == -1.0);
  CHECK(n[1] == 0.5);
  CHECK(n[2] == 0.0);
  CHECK(normalize_abs(TensorD({3})).max_abs() == 0.0);
}
