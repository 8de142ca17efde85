#pragma once

#include <span>
#include <string>

#include "pbl/fairness.hpp"

namespace pbl {

/// Gap chart for one (attribute, metric): groups on the x axis, a marker at
/// each mean gap, CI whiskers and a zero line. Fixed 800x400 viewBox.
///
/// Every data value is emitted through the same number formatting as the JSON
/// report (data-gap, data-ci-low, data-ci-high), so the chart can be checked
/// against gaps.json. Coordinates are layout only.
std::string render_gap_chart(const std::string& attribute, Metric metric, std::span<const GapResult> results);

/// JSON text of a double, as nlohmann::json dumps it.
std::string json_number(double v);

}  // namespace pbl
