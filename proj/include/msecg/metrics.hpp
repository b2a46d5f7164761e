// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <msecg/signal.hpp>

namespace msecg {
namespace metrics {

// All four metrics operate on equal-length flattened waveforms. For
// multi-lead segments the caller passes the channel-major raster so every
// lead contributes to one scalar per segment.

// (1/N) * sum (s - g)^2. Throws DimensionError on length mismatch,
// ParameterError on empty input.
double mse(const std::vector<double>& s, const std::vector<double>& g);

// s.g / (|s| |g|). Throws ParameterError when either norm is zero.
double cosine_similarity(const std::vector<double>& s,
                         const std::vector<double>& g);

// 10 log10(sum g^2 / sum (s - g)^2). Returns +infinity when s == g exactly;
// aggregation excludes non-finite values and counts them.
double snr_db(const std::vector<double>& s, const std::vector<double>& g);

// max |s - g|.
double mad(const std::vector<double>& s, const std::vector<double>& g);

struct SegmentMetrics {
  double mse = 0.0;
  double cos_sim = 0.0;
  double snr_db = 0.0;
  double mad = 0.0;
};

SegmentMetrics segment_metrics(const std::vector<double>& s,
                               const std::vector<double>& g);

// mean and sample standard deviation (n - 1); n <= 1 reports stdev 0.
struct Aggregate {
  double mean = 0.0;
  double stdev = 0.0;
};

Aggregate aggregate(const std::vector<double>& xs);

struct MetricsReport {
  std::vector<SegmentMetrics> per_segment;
  Aggregate mse, cos_sim, snr, mad;
  // Segments whose SNR was non-finite (prediction == ground truth); these
  // are excluded from the snr aggregate. If every segment is excluded the
  // snr aggregate is reported as 0 / 0.
  std::int64_t infinite_snr = 0;

  std::int64_t segments() const {
    return static_cast<std::int64_t>(per_segment.size());
  }
};

// Recomputes the aggregates from per-segment rows (used after deserializing
// or editing per_segment).
void refresh_aggregates(MetricsReport& report);

// Scores predictions against ground truth pairwise over the flattened
// multi-lead waveforms. Throws ParameterError on an empty set and
// DimensionError when a pair's shape or sample rate disagrees.
MetricsReport evaluate(const std::vector<Signal>& predictions,
                       const std::vector<Signal>& ground_truth);

// One row per segment plus mean and stdev footer rows. Non-finite SNR cells
// are written as "inf".
std::string to_csv(const MetricsReport& report);

// JSON object with counts, aggregates and per-segment rows; non-finite SNR
// values serialize as null.
std::string to_json(const MetricsReport& report);

// Coefficient of determination of the least-squares line through (x, y).
// Needs >= 2 points and non-constant x; a constant y fits exactly (1.0).
double linear_fit_r2(const std::vector<double>& x,
                     const std::vector<double>& y);

}  // namespace metrics
}  // namespace msecg
