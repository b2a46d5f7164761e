// SPDX-License-Identifier: Apache-2.0
#include <msecg/svg.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <msecg/errors.hpp>

namespace msecg {
namespace svg {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string px(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string render_overlay(const std::vector<Series>& series,
                           const std::string& title,
                           const std::string& x_label, double x_step,
                           int width, int height) {
  if (series.empty()) throw ParameterError("render_overlay: no series");
  if (!(x_step > 0.0))
    throw ParameterError("render_overlay: x_step must be positive");
  if (width < 200 || height < 120)
    throw ParameterError("render_overlay: canvas too small");

  std::size_t max_n = 0;
  double y_lo = 0.0, y_hi = 0.0;
  bool first = true;
  for (const auto& s : series) {
    if (s.y.size() < 2)
      throw ParameterError("render_overlay: series '" + s.label +
                           "' needs at least two points");
    max_n = std::max(max_n, s.y.size());
    for (double v : s.y) {
      if (!std::isfinite(v))
        throw ParameterError("render_overlay: non-finite sample in '" +
                             s.label + "'");
      y_lo = first ? v : std::min(y_lo, v);
      y_hi = first ? v : std::max(y_hi, v);
      first = false;
    }
  }
  if (y_hi == y_lo) {  // flat traces still need a visible band
    y_lo -= 1.0;
    y_hi += 1.0;
  }

  const double ml = 56.0, mr = 16.0, mt = 34.0, mb = 40.0;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;
  const double x_hi = static_cast<double>(max_n - 1) * x_step;
  const auto sx = [&](double x) { return ml + (x_hi > 0 ? x / x_hi : 0) * pw; };
  const auto sy = [&](double y) {
    return mt + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) +
         "\" viewBox=\"0 0 " + std::to_string(width) + " " +
         std::to_string(height) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + px(ml) + "\" y=\"20\" font-family=\"sans-serif\" "
         "font-size=\"14\" fill=\"black\">" + escape(title) + "</text>\n";

  // Axes with extreme-value ticks.
  out += "<line x1=\"" + px(ml) + "\" y1=\"" + px(mt) + "\" x2=\"" + px(ml) +
         "\" y2=\"" + px(mt + ph) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + px(ml) + "\" y1=\"" + px(mt + ph) + "\" x2=\"" +
         px(ml + pw) + "\" y2=\"" + px(mt + ph) + "\" stroke=\"black\"/>\n";
  out += "<text x=\"4\" y=\"" + px(mt + 5) + "\" font-family=\"sans-serif\" "
         "font-size=\"11\" fill=\"black\">" + num(y_hi) + "</text>\n";
  out += "<text x=\"4\" y=\"" + px(mt + ph) + "\" font-family=\"sans-serif\" "
         "font-size=\"11\" fill=\"black\">" + num(y_lo) + "</text>\n";
  out += "<text x=\"" + px(ml) + "\" y=\"" + px(height - 10.0) +
         "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">0"
         "</text>\n";
  out += "<text x=\"" + px(ml + pw - 40.0) + "\" y=\"" + px(height - 10.0) +
         "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">" +
         num(x_hi) + " " + escape(x_label) + "</text>\n";

  for (const auto& s : series) {
    out += "<polyline fill=\"none\" stroke=\"" + escape(s.color) +
           "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (i) out += ' ';
      out += px(sx(static_cast<double>(i) * x_step)) + "," + px(sy(s.y[i]));
    }
    out += "\"/>\n";
  }

  // Legend: one swatch + label per series, upper right.
  const double lx = ml + pw - 250.0;
  double ly = mt + 8.0;
  for (const auto& s : series) {
    out += "<line x1=\"" + px(lx) + "\" y1=\"" + px(ly) + "\" x2=\"" +
           px(lx + 22.0) + "\" y2=\"" + px(ly) + "\" stroke=\"" +
           escape(s.color) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + px(lx + 28.0) + "\" y=\"" + px(ly + 4.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"black\">" +
           escape(s.label) + "</text>\n";
    ly += 16.0;
  }

  out += "</svg>\n";
  return out;
}

}  // namespace svg
}  // namespace msecg
