#include "pbl/svg_chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace pbl {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 70.0;

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
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

const char* marker_colour(const GapResult& r) {
  const auto d = harm_direction(r.metric, r.gap, r.significant);
  if (d == Direction::harmful) return "#c0392b";
  if (d == Direction::favorable) return "#1e8449";
  return "#555555";
}

}  // namespace

std::string json_number(double v) { return nlohmann::json(v).dump(); }

std::string render_gap_chart(const std::string& attribute, Metric metric, std::span<const GapResult> results) {
  std::vector<const GapResult*> rows;
  for (const auto& r : results) {
    if (r.attribute == attribute && r.metric == metric) rows.push_back(&r);
  }
  std::sort(rows.begin(), rows.end(), [](const GapResult* a, const GapResult* b) { return a->group < b->group; });

  double extent = 0.0;
  for (const auto* r : rows) extent = std::max({extent, std::abs(r->ci_low), std::abs(r->ci_high), std::abs(r->gap)});
  if (!(extent > 0.0)) extent = 1.0;
  extent *= 1.1;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const auto y_of = [&](double v) { return kTop + plot_h * (0.5 - v / (2.0 * extent)); };
  const double zero_y = y_of(0.0);

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 400\" width=\"800\" height=\"400\"";
  s += " data-attribute=\"" + escape(attribute) + "\" data-metric=\"" + to_string(metric) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"400\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"400\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" + escape(attribute) +
       " / " + to_string(metric) + " gap</text>\n";
  s += "<line class=\"axis\" x1=\"" + coord(kLeft) + "\" y1=\"" + coord(kTop) + "\" x2=\"" + coord(kLeft) + "\" y2=\"" +
       coord(kTop + plot_h) + "\" stroke=\"#000000\"/>\n";
  s += "<line class=\"zero\" x1=\"" + coord(kLeft) + "\" y1=\"" + coord(zero_y) + "\" x2=\"" + coord(kLeft + plot_w) +
       "\" y2=\"" + coord(zero_y) + "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";

  const double slot = rows.empty() ? plot_w : plot_w / static_cast<double>(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = *rows[i];
    const double x = kLeft + slot * (static_cast<double>(i) + 0.5);
    const double y_low = y_of(r.ci_low);
    const double y_high = y_of(r.ci_high);
    const char* colour = marker_colour(r);
    s += "<g class=\"group\" data-group=\"" + escape(r.group) + "\" data-gap=\"" + json_number(r.gap) +
         "\" data-ci-low=\"" + json_number(r.ci_low) + "\" data-ci-high=\"" + json_number(r.ci_high) +
         "\" data-significant=\"" + (r.significant ? "true" : "false") + "\">\n";
    s += "  <line class=\"ci\" x1=\"" + coord(x) + "\" y1=\"" + coord(y_low) + "\" x2=\"" + coord(x) + "\" y2=\"" +
         coord(y_high) + "\" stroke=\"" + colour + "\"/>\n";
    for (double yc : {y_low, y_high}) {
      s += "  <line class=\"cap\" x1=\"" + coord(x - 6.0) + "\" y1=\"" + coord(yc) + "\" x2=\"" + coord(x + 6.0) +
           "\" y2=\"" + coord(yc) + "\" stroke=\"" + colour + "\"/>\n";
    }
    s += "  <circle class=\"marker\" cx=\"" + coord(x) + "\" cy=\"" + coord(y_of(r.gap)) + "\" r=\"5\" fill=\"" + colour +
         "\"/>\n";
    s += "  <text x=\"" + coord(x) + "\" y=\"" + coord(kTop + plot_h + 20.0) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(r.group) + "</text>\n";
    s += "</g>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace pbl
