#include <regex>
#include <set>

#include <gtest/gtest.h>

#include "pbl/fairness.hpp"
#include "pbl/svg_chart.hpp"
#include "test_support.hpp"

namespace pbl {
namespace {

struct Marker {
  std::string group, gap, ci_low, ci_high, significant;
};

std::vector<Marker> markers(const std::string& svg) {
  static const std::regex re(
      "<g class=\"group\" data-group=\"([^\"]*)\" data-gap=\"([^\"]*)\" data-ci-low=\"([^\"]*)\" "
      "data-ci-high=\"([^\"]*)\" data-significant=\"([^\"]*)\">");
  std::vector<Marker> out;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back({(*it)[1], (*it)[2], (*it)[3], (*it)[4], (*it)[5]});
  }
  return out;
}

GapReport sample_report(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return compute_gap_report(testing::oracle::to_predictions(testing::oracle::random_instance(rng)));
}

TEST(SvgChart, DataValuesAppearVerbatimInJson) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto report = sample_report(seed);
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : report.results) doc.push_back(to_json(r));
    const std::string json_text = doc.dump(2);

    std::set<std::pair<std::string, Metric>> charts;
    for (const auto& r : report.results) charts.insert({r.attribute, r.metric});
    for (const auto& [attribute, metric] : charts) {
      const auto svg = render_gap_chart(attribute, metric, report.results);
      for (const auto& m : markers(svg)) {
        for (const auto& [key, text] :
             {std::pair<std::string, std::string>{"gap", m.gap}, {"ci_low", m.ci_low}, {"ci_high", m.ci_high}}) {
          EXPECT_NE(json_text.find("\"" + key + "\": " + text), std::string::npos) << key << " " << text;
        }
      }
    }
  }
}

TEST(SvgChart, OneMarkerPerGroupSortedByName) {
  const auto report = sample_report(5);
  const auto& first = report.results.front();
  const auto svg = render_gap_chart(first.attribute, first.metric, report.results);
  std::vector<std::string> expected;
  for (const auto& r : report.results) {
    if (r.attribute == first.attribute && r.metric == first.metric) expected.push_back(r.group);
  }
  std::sort(expected.begin(), expected.end());
  std::vector<std::string> got;
  for (const auto& m : markers(svg)) got.push_back(m.group);
  EXPECT_EQ(got, expected);
  EXPECT_NE(svg.find("viewBox=\"0 0 800 400\""), std::string::npos);
  EXPECT_NE(svg.find("class=\"zero\""), std::string::npos);
  EXPECT_EQ(svg, render_gap_chart(first.attribute, first.metric, report.results));
}

TEST(SvgChart, IdenticalGroupsPlotAtZero) {
  // Every group behaves identically in every prompt.
  std::vector<std::vector<GroupPrediction>> per_prompt(3);
  for (int p = 0; p < 3; ++p) {
    for (const char* g : {"adult", "old", "young"}) {
      per_prompt[static_cast<std::size_t>(p)].push_back({"age", g, Sentiment::negative, Sentiment::positive});
      per_prompt[static_cast<std::size_t>(p)].push_back({"age", g, Sentiment::neutral, Sentiment::neutral});
      per_prompt[static_cast<std::size_t>(p)].push_back({"age", g, Sentiment::positive, Sentiment::negative});
    }
  }
  const auto report = compute_gap_report(per_prompt);
  for (Metric metric : kAllMetrics) {
    const auto ms = markers(render_gap_chart("age", metric, report.results));
    ASSERT_EQ(ms.size(), 3u);
    for (const auto& m : ms) {
      EXPECT_EQ(m.gap, "0.0");
      EXPECT_EQ(m.ci_low, "0.0");
      EXPECT_EQ(m.ci_high, "0.0");
      EXPECT_EQ(m.significant, "false");
    }
  }
}

TEST(SvgChart, EscapesNames) {
  GapResult r;
  r.attribute = "a&b";
  r.group = "<x>";
  const std::vector<GapResult> rs{r};
  const auto svg = render_gap_chart("a&b", Metric::accuracy, rs);
  EXPECT_NE(svg.find("data-group=\"&lt;x&gt;\""), std::string::npos);
  EXPECT_EQ(svg.find("<x>"), std::string::npos);
}

TEST(SvgChart, EmptySelectionStillRenders) {
  const auto svg = render_gap_chart("none", Metric::accuracy, {});
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_TRUE(markers(svg).empty());
}

}  // namespace
}  // namespace pbl
