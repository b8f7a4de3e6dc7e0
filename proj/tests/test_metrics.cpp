#include <doctest.h>

#include <sstream>

#include "lrp3d/metrics.hpp"
#include "lrp3d/synthetic.hpp"
#include "support.hpp"

using namespace lrp3d;

namespace {

TensorD values(std::initializer_list<double> v) {
  TensorD t({static_cast<Index>(v.size())});
  Index i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

Mask bits(std::initializer_list<int> v) {
  Mask m({static_cast<Index>(v.size())});
  std::size_t i = 0;
  for (int x : v) m.data[i++] = static_cast<std::uint8_t>(x);
  return m;
}

MetricsOptions full_seed() {
  MetricsOptions o;
  o.seed = SeedSpec::full_output();
  return o;
}

}  // namespace

TEST_CASE("binarize") {
  CHECK(binarize(values({0.1, 0.6, 1.0}), 0.5) == bits({0, 1, 1}));
  CHECK(binarize(values({0.0, -0.2, 0.0, 0.7}), 0.0) == bits({0, 1, 0, 1}));
  CHECK(binarize(values({0.3, -1.0, 1.0, 0.99}), 1.0) == bits({0, 1, 1, 0}));
  CHECK(binarize(values({0.0, 0.0}), 0.0) == bits({0, 0}));
  CHECK_THROWS_AS(binarize(values({1.0}), 1.5), RangeError);
  CHECK_THROWS_AS(binarize(values({1.0}), -0.1), RangeError);
}

TEST_CASE("inclusivity") {
  Mask a({200}), b({200});
  for (std::size_t i = 0; i < 100; ++i) b.data[i] = 1;
  for (std::size_t i = 0; i < 150; ++i) a.data[i] = 1;
  CHECK(inclusivity(a, b) == doctest::Approx(100.0 / (100.0 + 1e-6)).epsilon(1e-15));
  CHECK(inclusivity(a, b) < 1.0);
  CHECK(inclusivity(bits({1, 0}), bits({0, 1})) == 0.0);
  CHECK(inclusivity(bits({1, 1}), bits({0, 0})) == 0.0);
  CHECK(inclusivity(b, b) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK_THROWS_AS(inclusivity(bits({1}), bits({1, 0})), DimensionError);

  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    Mask x({64}), y({64}), bigger({64});
    for (std::size_t i = 0; i < 64; ++i) {
      x.data[i] = rng.uniform() < 0.3;
      y.data[i] = rng.uniform() < 0.4;
      bigger.data[i] = x.data[i] || rng.uniform() < 0.3;
    }
    REQUIRE(inclusivity(x, y) <= inclusivity(bigger, y));
    REQUIRE(inclusivity(x, y) >= 0.0);
    REQUIRE(inclusivity(x, y) <= 1.0);
  }
}

TEST_CASE("signal statistics") {
  SUBCASE("constant map under full pass") {
    const auto s = signal_stats(TensorD::constant({10, 10}, 0.5), FilterSpec::pass(0.0, 1.0));
    CHECK(s.valid);
    CHECK(s.max_abs == 0.5);
    CHECK(s.mu == doctest::Approx(1.0));
    CHECK(s.area == doctest::Approx(1.0));
    CHECK(s.omega_tilde == 0.0);
  }
  SUBCASE("single spike above the band") {
    TensorD t({1000});
    t[123] = 1.0;
    const auto s = signal_stats(t, FilterSpec::pass(0.0, 0.4));
    CHECK(s.mu == 0.0);
    CHECK(s.area == 0.0);
    CHECK(s.omega_tilde == doctest::Approx(0.001));
  }
  SUBCASE("background below the band is removed") {
    TensorD t = TensorD::constant({50}, 0.3);
    t[0] = 1.0;
    const auto s = signal_stats(t, FilterSpec::pass(0.4, 1.0));
    CHECK(s.mu == doctest::Approx(1.0 / 50));
    CHECK(s.area == doctest::Approx(1.0 / 50));
    // a constant map normalizes to 1 and sits inside the band
    CHECK(signal_stats(TensorD::constant({50}, 0.3), FilterSpec::pass(0.4, 1.0)).mu == doctest::Approx(1.0));
  }
  SUBCASE("already normalized map keeps its mean") {
    const auto s = signal_stats(values({1.0, 0.5, 0.0, -0.5}), FilterSpec::pass(0.0, 1.0));
    CHECK(s.mu == doctest::Approx(0.25));
    CHECK(s.area == doctest::Approx(0.5));
  }
  SUBCASE("position weighting applies to the mean only") {
    const auto s = signal_stats(values({1.0, 1.0, 1.0}), FilterSpec::pass(0.0, 1.0), true);
    CHECK(s.mu == doctest::Approx(0.5));
    CHECK(s.area == doctest::Approx(1.0));
  }
  SUBCASE("all-zero channel is invalid") {
    const auto s = signal_stats(TensorD({8}), FilterSpec::clamp(0.2));
    CHECK(!s.valid);
    CHECK(s.mu == 0.0);
    CHECK(s.area == 0.0);
    CHECK(s.omega_tilde == 0.0);
  }
  SUBCASE("invariants on random signals") {
    Rng rng(52);
    for (int trial = 0; trial < 300; ++trial) {
      const TensorD t = test::random_tensor<double>({40}, rng, -2.0, 3.0);
      const double a = rng.uniform(0.05, 1.0);
      for (const auto& spec : {FilterSpec::pass(0.0, a), FilterSpec::pass(a / 2, a), FilterSpec::clamp(a)}) {
        const auto s = signal_stats(t, spec);
        REQUIRE(std::abs(s.mu) <= s.area + 1e-15);
        REQUIRE(s.area <= 1.0);
        REQUIRE(s.omega_tilde >= 0.0);
        REQUIRE(s.omega_tilde <= 1.0);
      }
      const auto full = signal_stats(t, FilterSpec::pass(0.0, 1.0));
      REQUIRE(full.omega_tilde == 0.0);
      REQUIRE(full.mu == doctest::Approx(t.vec().mean() / t.max_abs()).epsilon(1e-12));
    }
  }
}

TEST_CASE("filter families") {
  const auto p = pass_family(0.05, {0.2, 1.0});
  REQUIRE(p.size() == 2);
  CHECK(p[0] == FilterSpec::pass(0.05, 0.2));
  CHECK(clamp_family({0.3})[0] == FilterSpec::clamp(0.3));
  CHECK_THROWS_AS(pass_family(0.5, {0.2}), ConfigError);
}

TEST_CASE("inclusivity report") {
  TensorD r0({2, 1, 2, 2}), x({2, 1, 2, 2});
  // channel 0 relevance sits on the lesion voxel 0 and on voxel 1
  r0[0] = 1.0, r0[1] = 0.3;
  x[0] = 1.0, x[2] = 1.0;
  x[4] = 1.0;
  Mask gt({1, 2, 2});
  gt.data[0] = 1;
  const auto rep = inclusivity_report(r0, x, gt, std::nullopt, MetricsOptions{}, "c");
  REQUIRE(rep.channels.size() == 2);
  CHECK(rep.channels[0].valid);
  CHECK(rep.channels[0].incl_x == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(rep.channels[0].incl_gt == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(!rep.channels[1].valid);
  CHECK(rep.mean_incl_gt() == doctest::Approx(1.0).epsilon(1e-6));

  const auto filtered = inclusivity_report(r0, x, gt, FilterSpec::pass(0.0, 0.4), MetricsOptions{}, "c");
  CHECK(filtered.channels[0].incl_gt == 0.0);
  const std::string csv = inclusivity_csv({rep, filtered});
  CHECK(csv.rfind(std::string(kInclusivityCsvHeader) + "\nc,0,raw,0.5,0,", 0) == 0);
  CHECK(csv.find("\nc,1,pass:0:0.4,") != std::string::npos);
  CHECK_THROWS_AS(inclusivity_report(r0, x, Mask({1, 2, 3}), std::nullopt, MetricsOptions{}), DimensionError);
}

TEST_CASE("alpha sweep on a small network") {
  Dataset data = gen_synthetic(3, 2, {6, 8, 16, 16});
  const auto net = test::seeded_unet<float>(test::small_config(), 2);
  const std::vector<FilterSpec> filters{FilterSpec::clamp(0.5), FilterSpec::pass(0.0, 1.0), FilterSpec::pass(0.0, 0.2)};
  const SweepTable table = alpha_sweep(net, data, filters, full_seed());

  CHECK(table.rows.size() == 2 * 6 * 3);
  CHECK(table.valid_count() == 2 * 6 * 3);
  CHECK(table.rows[0].filter == FilterSpec::pass(0.0, 0.2));
  CHECK(table.rows[1].filter == FilterSpec::clamp(0.5));
  CHECK(table.rows[2].filter == FilterSpec::pass(0.0, 1.0));
  CHECK(table.rows[3].channel == 1);
  CHECK(table.rows[18].case_id == data[1].id);

  const auto ex = explain_case(net, data[0], full_seed());
  for (Index ch = 0; ch < 6; ++ch) {
    const auto& row = table.rows[static_cast<std::size_t>(ch * 3 + 2)];
    const auto raw = signal_stats(ex.relevance.channel(ch), FilterSpec::pass(0.0, 1.0));
    CHECK(row.stats.mu == raw.mu);
    CHECK(row.stats.omega_tilde == 0.0);
    CHECK(row.dice == ex.dice);
  }

  const std::string csv = table.to_csv();
  CHECK(csv.substr(0, csv.find('\n')) == "case,channel,alpha_lo,alpha_hi,filter_kind,mu,area,omega_tilde,incl_x,incl_gt,dice,valid");
  std::istringstream lines(csv);
  std::string line;
  Index n = 0;
  while (std::getline(lines, line)) ++n;
  CHECK(n == 1 + 36);
  CHECK(table.mu_spread(FilterSpec::pass(0.0, 1.0)) > 0.0);
  CHECK(table.mu_spread(FilterSpec::pass(0.3, 0.4)) == 0.0);

  SUBCASE("a zero input channel yields an invalid row") {
    data[0].x.set_channel(2, TensorF(spatial_of(data[0].x.shape())));
    const SweepTable t = alpha_sweep(net, data, {FilterSpec::pass(0.0, 1.0)}, full_seed());
    CHECK(t.rows.size() == 12);
    CHECK(!t.rows[2].stats.valid);
    CHECK(t.valid_count() == 11);
    CHECK(t.to_csv().find("\n" + data[0].id + ",2,0,1,pass,0,0,0,0,0,") != std::string::npos);
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(alpha_sweep(net, {}, filters, full_seed()), ConfigError);
    CHECK_THROWS_AS(alpha_sweep(net, data, {}, full_seed()), ConfigError);
  }
}
