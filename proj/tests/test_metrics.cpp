// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include <json.hpp>

#include <msecg/dsp.hpp>
#include <msecg/metrics.hpp>
#include <msecg/rng.hpp>
#include <msecg/signal.hpp>

using msecg::Rng;
using msecg::Signal;
namespace metrics = msecg::metrics;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("mse matches closed forms and a loop oracle") {
  std::vector<double> g = {1.0, -2.0, 0.5};
  CHECK(metrics::mse(g, g) == 0.0);

  std::vector<double> s = g;
  for (auto& v : s) v += 1.0;
  CHECK(metrics::mse(s, g) == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(1);
  auto a = random_vec(100, rng, -3.0, 3.0);
  auto b = random_vec(100, rng, -3.0, 3.0);
  double want = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    want += (a[i] - b[i]) * (a[i] - b[i]);
  want /= 100.0;
  CHECK(std::abs(metrics::mse(a, b) - want) < 1e-15);

  CHECK_THROWS_AS(metrics::mse({1.0}, {1.0, 2.0}), msecg::DimensionError);
  CHECK_THROWS_AS(metrics::mse({}, {}), msecg::ParameterError);
}

TEST_CASE("cosine similarity hits its closed-form anchors") {
  std::vector<double> g = {0.3, -1.2, 2.0, 0.7};
  CHECK(metrics::cosine_similarity(g, g) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> neg = g;
  for (auto& v : neg) v = -v;
  CHECK(metrics::cosine_similarity(neg, g) ==
        doctest::Approx(-1.0).epsilon(1e-12));

  std::vector<double> e1 = {1.0, 0.0}, e2 = {0.0, 1.0};
  CHECK(metrics::cosine_similarity(e1, e2) == 0.0);

  // Positive scaling leaves it unchanged.
  Rng rng(2);
  auto a = random_vec(50, rng, -1.0, 1.0);
  auto b = random_vec(50, rng, -1.0, 1.0);
  auto a5 = a;
  for (auto& v : a5) v *= 5.0;
  CHECK(metrics::cosine_similarity(a5, b) ==
        doctest::Approx(metrics::cosine_similarity(a, b)).epsilon(1e-12));

  std::vector<double> zero(4, 0.0);
  CHECK_THROWS_AS(metrics::cosine_similarity(zero, g), msecg::ParameterError);
  CHECK_THROWS_AS(metrics::cosine_similarity(g, zero), msecg::ParameterError);
}

TEST_CASE("snr is the power ratio in decibels") {
  Rng rng(3);
  auto g = random_vec(200, rng, -1.0, 1.0);
  auto n = random_vec(200, rng, -1.0, 1.0);
  // Scale the perturbation to exactly the signal power: 0 dB.
  double pg = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    pg += g[i] * g[i];
    pn += n[i] * n[i];
  }
  const double a = std::sqrt(pg / pn);
  auto s = g;
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += a * n[i];
  CHECK(metrics::snr_db(s, g) == doctest::Approx(0.0).epsilon(1e-12));

  // One tenth the amplitude is one hundredth the power: 20 dB.
  auto s2 = g;
  for (std::size_t i = 0; i < s2.size(); ++i) s2[i] += 0.1 * a * n[i];
  CHECK(metrics::snr_db(s2, g) == doctest::Approx(20.0).epsilon(1e-12));

  // Loop oracle on an arbitrary pair.
  auto x = random_vec(77, rng, -2.0, 2.0);
  auto y = random_vec(77, rng, -2.0, 2.0);
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sig += y[i] * y[i];
    err += (x[i] - y[i]) * (x[i] - y[i]);
  }
  CHECK(std::abs(metrics::snr_db(x, y) - 10.0 * std::log10(sig / err)) <
        1e-12);

  CHECK(std::isinf(metrics::snr_db(g, g)));
  CHECK(metrics::snr_db(g, g) > 0);
}

TEST_CASE("snr orders predictions opposite to mse for shared ground truth") {
  Rng rng(4);
  auto g = random_vec(128, rng, -1.0, 1.0);
  auto noise = random_vec(128, rng, -1.0, 1.0);
  auto s1 = g, s2 = g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    s1[i] += 0.05 * noise[i];
    s2[i] += 0.30 * noise[i];
  }
  REQUIRE(metrics::mse(s1, g) < metrics::mse(s2, g));
  CHECK(metrics::snr_db(s1, g) > metrics::snr_db(s2, g));
}

TEST_CASE("mad is the worst-case deviation") {
  std::vector<double> g(10, 0.25);
  CHECK(metrics::mad(g, g) == 0.0);

  auto s = g;
  s[6] += 0.5;
  CHECK(metrics::mad(s, g) == doctest::Approx(0.5).epsilon(1e-15));

  // max >= mean implies MAD^2 >= MSE on any pair.
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_vec(64, rng, -2.0, 2.0);
    auto b = random_vec(64, rng, -2.0, 2.0);
    const double m = metrics::mad(a, b);
    CHECK(m * m >= metrics::mse(a, b));
  }
}

TEST_CASE("aggregate uses sample standard deviation") {
  // Hand case: {1, 2, 3, 4} -> mean 2.5, sample var 5/3.
  auto a = metrics::aggregate({1.0, 2.0, 3.0, 4.0});
  CHECK(a.mean == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(a.stdev == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));

  auto single = metrics::aggregate({7.0});
  CHECK(single.mean == 7.0);
  CHECK(single.stdev == 0.0);

  auto empty = metrics::aggregate({});
  CHECK(empty.mean == 0.0);
  CHECK(empty.stdev == 0.0);
}

TEST_CASE("evaluate scores flattened multi-lead segments") {
  Rng rng(6);
  std::vector<Signal> preds, gts;
  for (int k = 0; k < 4; ++k) {
    Signal gt(3, 40, 500.0);
    for (auto& v : gt.data) v = rng.uniform(-1.0, 1.0);
    Signal pred = gt;
    for (auto& v : pred.data) v += rng.uniform(-0.1, 0.1);
    preds.push_back(pred);
    gts.push_back(gt);
  }
  auto report = metrics::evaluate(preds, gts);
  REQUIRE(report.segments() == 4);
  CHECK(report.infinite_snr == 0);

  // Hand-aggregate from independently recomputed per-segment values.
  std::vector<double> mses, coses, snrs, mads;
  for (int k = 0; k < 4; ++k) {
    mses.push_back(metrics::mse(preds[k].data, gts[k].data));
    coses.push_back(metrics::cosine_similarity(preds[k].data, gts[k].data));
    snrs.push_back(metrics::snr_db(preds[k].data, gts[k].data));
    mads.push_back(metrics::mad(preds[k].data, gts[k].data));
  }
  const auto agg = [](std::vector<double> xs) { return metrics::aggregate(xs); };
  CHECK(report.mse.mean == doctest::Approx(agg(mses).mean).epsilon(1e-12));
  CHECK(report.mse.stdev == doctest::Approx(agg(mses).stdev).epsilon(1e-12));
  CHECK(report.cos_sim.mean == doctest::Approx(agg(coses).mean).epsilon(1e-12));
  CHECK(report.snr.mean == doctest::Approx(agg(snrs).mean).epsilon(1e-12));
  CHECK(report.mad.stdev == doctest::Approx(agg(mads).stdev).epsilon(1e-12));

  // Aggregates recompute exactly from the stored per-segment rows.
  metrics::MetricsReport copy = report;
  copy.mse = copy.cos_sim = copy.snr = copy.mad = metrics::Aggregate{};
  metrics::refresh_aggregates(copy);
  CHECK(copy.mse.mean == report.mse.mean);
  CHECK(copy.mse.stdev == report.mse.stdev);
  CHECK(copy.cos_sim.mean == report.cos_sim.mean);
  CHECK(copy.snr.mean == report.snr.mean);
  CHECK(copy.snr.stdev == report.snr.stdev);
  CHECK(copy.mad.mean == report.mad.mean);
  CHECK(copy.infinite_snr == report.infinite_snr);
}

TEST_CASE("perfect predictions report zero error and all-infinite snr") {
  Rng rng(7);
  std::vector<Signal> gts;
  for (int k = 0; k < 3; ++k) {
    Signal gt(2, 25, 500.0);
    for (auto& v : gt.data) v = rng.uniform(-1.0, 1.0);
    gts.push_back(gt);
  }
  auto report = metrics::evaluate(gts, gts);
  CHECK(report.mse.mean == 0.0);
  CHECK(report.mad.mean == 0.0);
  CHECK(report.cos_sim.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.infinite_snr == report.segments());
  CHECK(report.snr.mean == 0.0);  // all excluded -> degenerate aggregate
  CHECK(report.snr.stdev == 0.0);
}

TEST_CASE("single-segment report has zero stdev by convention") {
  Signal gt(1, 30, 500.0);
  Rng rng(8);
  for (auto& v : gt.data) v = rng.uniform(-1.0, 1.0);
  Signal pred = gt;
  pred.data[4] += 0.2;
  auto report = metrics::evaluate({pred}, {gt});
  CHECK(report.segments() == 1);
  CHECK(report.mse.stdev == 0.0);
  CHECK(report.snr.stdev == 0.0);
}

TEST_CASE("evaluate rejects empty and mismatched inputs") {
  CHECK_THROWS_AS(metrics::evaluate({}, {}), msecg::ParameterError);

  Signal a(2, 10, 500.0), b(2, 10, 500.0), c(3, 10, 500.0);
  Rng rng(9);
  for (auto& v : a.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : b.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : c.data) v = rng.uniform(-1.0, 1.0);
  CHECK_THROWS_AS(metrics::evaluate({a}, {b, b}), msecg::DimensionError);
  CHECK_THROWS_AS(metrics::evaluate({a}, {c}), msecg::DimensionError);
  Signal slow(2, 10, 50.0);
  for (auto& v : slow.data) v = rng.uniform(-1.0, 1.0);
  CHECK_THROWS_AS(metrics::evaluate({a}, {slow}), msecg::DimensionError);
}

TEST_CASE("interpolation baseline scores match hand aggregation") {
  // End to end: decimate synthetic waves, upsample back, evaluate.
  Rng rng(10);
  std::vector<Signal> preds, gts;
  for (int k = 0; k < 5; ++k) {
    Signal gt(2, 500, 500.0);
    for (std::int64_t c = 0; c < 2; ++c)
      for (std::int64_t i = 0; i < 500; ++i)
        gt.at(c, i) = std::sin(2.0 * 3.141592653589793 * (3.0 + k) * i / 500.0) +
                      0.1 * rng.uniform(-1.0, 1.0);
    auto lr = msecg::dsp::decimate_skip(gt, 10);
    preds.push_back(msecg::dsp::li_upsample(lr, 10));
    gts.push_back(gt);
  }
  auto report = metrics::evaluate(preds, gts);
  REQUIRE(report.segments() == 5);
  CHECK(report.infinite_snr == 0);
  CHECK(report.mse.mean > 0.0);
  CHECK(report.cos_sim.mean > 0.9);

  std::vector<double> mses;
  for (int k = 0; k < 5; ++k)
    mses.push_back(metrics::mse(preds[k].data, gts[k].data));
  auto magg = metrics::aggregate(mses);
  CHECK(std::abs(report.mse.mean - magg.mean) < 1e-12);
  CHECK(std::abs(report.mse.stdev - magg.stdev) < 1e-12);
}

TEST_CASE("csv and json serializations carry the full report") {
  Rng rng(11);
  Signal gt(2, 20, 500.0);
  for (auto& v : gt.data) v = rng.uniform(-1.0, 1.0);
  Signal pred = gt;
  for (auto& v : pred.data) v += rng.uniform(-0.05, 0.05);
  auto report = metrics::evaluate({pred, gt}, {gt, gt});
  REQUIRE(report.infinite_snr == 1);

  const std::string csv = metrics::to_csv(report);
  // Header + 2 segments + mean + std = 5 lines.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.rfind("segment,mse,cos,snr_db,mad\n", 0) == 0);
  CHECK(csv.find(",inf,") != std::string::npos);

  auto j = nlohmann::json::parse(metrics::to_json(report));
  CHECK(j["segments"].get<std::int64_t>() == 2);
  CHECK(j["infinite_snr"].get<std::int64_t>() == 1);
  CHECK(j["per_segment"].size() == 2);
  CHECK(j["per_segment"][1]["snr_db"].is_null());
  CHECK(j["mse"]["mean"].get<double>() == report.mse.mean);
  CHECK(j["snr_db"]["stdev"].get<double>() == report.snr.stdev);
}
