// SPDX-License-Identifier: Apache-2.0
#include <msecg/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>

#include <json.hpp>

#include <msecg/errors.hpp>

namespace msecg {
namespace metrics {

namespace {

void require_pair(const std::vector<double>& s, const std::vector<double>& g,
                  const char* op) {
  if (s.empty())
    throw ParameterError(std::string(op) + ": empty input");
  if (s.size() != g.size())
    throw DimensionError(std::string(op) + ": length mismatch " +
                         std::to_string(s.size()) + " vs " +
                         std::to_string(g.size()));
}

}  // namespace

double mse(const std::vector<double>& s, const std::vector<double>& g) {
  require_pair(s, g, "mse");
  // inner_product accumulates strictly in order, so results are
  // reproducible across runs and match a plain loop exactly.
  const double total = std::inner_product(
      s.begin(), s.end(), g.begin(), 0.0, std::plus<>{},
      [](double a, double b) { return (a - b) * (a - b); });
  return total / static_cast<double>(s.size());
}

double cosine_similarity(const std::vector<double>& s,
                         const std::vector<double>& g) {
  require_pair(s, g, "cosine_similarity");
  const double dot = std::inner_product(s.begin(), s.end(), g.begin(), 0.0);
  const double ns = std::sqrt(std::inner_product(s.begin(), s.end(),
                                                 s.begin(), 0.0));
  const double ng = std::sqrt(std::inner_product(g.begin(), g.end(),
                                                 g.begin(), 0.0));
  if (ns == 0.0 || ng == 0.0)
    throw ParameterError("cosine_similarity: zero-norm input");
  return dot / (ns * ng);
}

double snr_db(const std::vector<double>& s, const std::vector<double>& g) {
  require_pair(s, g, "snr_db");
  const double sig = std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
  const double err = std::inner_product(
      s.begin(), s.end(), g.begin(), 0.0, std::plus<>{},
      [](double a, double b) { return (a - b) * (a - b); });
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / err);
}

double mad(const std::vector<double>& s, const std::vector<double>& g) {
  require_pair(s, g, "mad");
  return std::inner_product(
      s.begin(), s.end(), g.begin(), 0.0,
      [](double a, double b) { return std::max(a, b); },
      [](double a, double b) { return std::abs(a - b); });
}

SegmentMetrics segment_metrics(const std::vector<double>& s,
                               const std::vector<double>& g) {
  SegmentMetrics m;
  m.mse = mse(s, g);
  m.cos_sim = cosine_similarity(s, g);
  m.snr_db = snr_db(s, g);
  m.mad = mad(s, g);
  return m;
}

Aggregate aggregate(const std::vector<double>& xs) {
  Aggregate a;
  if (xs.empty()) return a;
  a.mean = std::accumulate(xs.begin(), xs.end(), 0.0) /
           static_cast<double>(xs.size());
  if (xs.size() < 2) return a;
  double ss = 0.0;
  for (double x : xs) ss += (x - a.mean) * (x - a.mean);
  a.stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return a;
}

void refresh_aggregates(MetricsReport& report) {
  std::vector<double> col;
  col.reserve(report.per_segment.size());

  const auto gather = [&](double SegmentMetrics::* field) {
    col.clear();
    for (const auto& m : report.per_segment) col.push_back(m.*field);
    return aggregate(col);
  };
  report.mse = gather(&SegmentMetrics::mse);
  report.cos_sim = gather(&SegmentMetrics::cos_sim);
  report.mad = gather(&SegmentMetrics::mad);

  col.clear();
  report.infinite_snr = 0;
  for (const auto& m : report.per_segment) {
    if (std::isfinite(m.snr_db))
      col.push_back(m.snr_db);
    else
      ++report.infinite_snr;
  }
  report.snr = aggregate(col);
}

MetricsReport evaluate(const std::vector<Signal>& predictions,
                       const std::vector<Signal>& ground_truth) {
  if (predictions.empty())
    throw ParameterError("evaluate: empty segment set");
  if (predictions.size() != ground_truth.size())
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) +
                         " predictions vs " +
                         std::to_string(ground_truth.size()) +
                         " ground-truth segments");
  MetricsReport report;
  report.per_segment.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Signal& p = predictions[i];
    const Signal& g = ground_truth[i];
    if (p.channels != g.channels || p.length() != g.length() ||
        p.sample_rate != g.sample_rate)
      throw DimensionError("evaluate: segment " + std::to_string(i) +
                           " shape or rate mismatch");
    report.per_segment.push_back(segment_metrics(p.data, g.data));
  }
  refresh_aggregates(report);
  return report;
}

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string to_csv(const MetricsReport& report) {
  std::string out = "segment,mse,cos,snr_db,mad\n";
  for (std::size_t i = 0; i < report.per_segment.size(); ++i) {
    const auto& m = report.per_segment[i];
    out += std::to_string(i) + "," + num(m.mse) + "," + num(m.cos_sim) +
           "," + num(m.snr_db) + "," + num(m.mad) + "\n";
  }
  out += "mean," + num(report.mse.mean) + "," + num(report.cos_sim.mean) +
         "," + num(report.snr.mean) + "," + num(report.mad.mean) + "\n";
  out += "std," + num(report.mse.stdev) + "," + num(report.cos_sim.stdev) +
         "," + num(report.snr.stdev) + "," + num(report.mad.stdev) + "\n";
  return out;
}

std::string to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["segments"] = report.segments();
  j["infinite_snr"] = report.infinite_snr;
  const auto agg = [](const Aggregate& a) {
    return nlohmann::json{{"mean", a.mean}, {"stdev", a.stdev}};
  };
  j["mse"] = agg(report.mse);
  j["cos"] = agg(report.cos_sim);
  j["snr_db"] = agg(report.snr);
  j["mad"] = agg(report.mad);
  auto rows = nlohmann::json::array();
  for (const auto& m : report.per_segment) {
    nlohmann::json row{{"mse", m.mse}, {"cos", m.cos_sim}, {"mad", m.mad}};
    if (std::isfinite(m.snr_db))
      row["snr_db"] = m.snr_db;
    else
      row["snr_db"] = nullptr;
    rows.push_back(std::move(row));
  }
  j["per_segment"] = std::move(rows);
  return j.dump(2) + "\n";
}

double linear_fit_r2(const std::vector<double>& x,
                     const std::vector<double>& y) {
  if (x.size() != y.size())
    throw DimensionError("linear_fit_r2: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw ParameterError("linear_fit_r2: need at least two points");
  const double nx = static_cast<double>(n);
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / nx;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / nx;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ParameterError("linear_fit_r2: x must vary");
  const double slope = sxy / sxx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fit = my + slope * (x[i] - mx);
    ss_res += (y[i] - fit) * (y[i] - fit);
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  if (ss_tot == 0.0) return 1.0;  // constant y, fit is exact
  return 1.0 - ss_res / ss_tot;
}

}  // namespace metrics
}  // namespace msecg
