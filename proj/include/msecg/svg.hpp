// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace msecg {
namespace svg {

/// One plotted trace. x runs i * x_step for sample index i; labels appear
/// verbatim in the legend (callers embed annotations there).
struct Series {
  std::string label;
  std::string color;
  std::vector<double> y;
};

/// Self-contained SVG line chart: shared axes, one polyline per series, a
/// legend box, and min/max tick labels. Deterministic output for identical
/// input. Requires at least one series and two points per series.
std::string render_overlay(const std::vector<Series>& series,
                           const std::string& title,
                           const std::string& x_label, double x_step,
                           int width = 960, int height = 360);

}  // namespace svg
}  // namespace msecg
