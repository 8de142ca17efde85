#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "pbl/error.hpp"
#include "pbl/fairness.hpp"
#include "test_support.hpp"

namespace pbl {
namespace {

namespace oracle = testing::oracle;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected pbl::Error";
  return ErrorKind::data;
}

constexpr auto N = Sentiment::negative;
constexpr auto U = Sentiment::neutral;
constexpr auto P = Sentiment::positive;

GroupPrediction pred(const std::string& group, Sentiment gold, Sentiment predicted) {
  return {"age", group, gold, predicted};
}

TEST(Tally, PerfectClassifierHasNoFalsePositives) {
  const std::vector<GroupPrediction> preds{pred("old", N, N), pred("old", U, U), pred("old", P, P),
                                           pred("young", P, P)};
  const auto table = tally(preds);
  for (const auto& [key, conf] : table) {
    EXPECT_EQ(conf.correct, conf.total);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(conf.false_positive[static_cast<std::size_t>(c)], 0);
  }
}

TEST(Tally, NegativeGoldPredictedPositive) {
  const std::vector<GroupPrediction> preds{pred("old", N, P)};
  const auto conf = tally(preds).at({"age", "old"});
  EXPECT_EQ(conf.false_positive[2], 1);
  EXPECT_EQ(conf.fp_eligible[2], 1);
  EXPECT_EQ(conf.fp_eligible[0], 0);
  EXPECT_EQ(conf.correct, 0);
  EXPECT_EQ(conf.true_positive[2], 0);
}

TEST(Tally, GroupTotalsPartitionTheAttribute) {
  std::mt19937_64 rng(3);
  const auto inst = oracle::random_instance(rng);
  const auto preds = oracle::to_predictions(inst)[0];
  std::map<std::string, int> per_attribute;
  for (const auto& [key, conf] : tally(preds)) {
    per_attribute[key.first] += conf.total;
    EXPECT_LE(conf.correct, conf.total);
    for (int c = 0; c < 3; ++c) {
      EXPECT_LE(conf.false_positive[static_cast<std::size_t>(c)], conf.fp_eligible[static_cast<std::size_t>(c)]);
      EXPECT_LE(conf.fp_eligible[static_cast<std::size_t>(c)], conf.total);
    }
  }
  std::map<std::string, int> expected;
  for (const auto& p : preds) ++expected[p.attribute];
  EXPECT_EQ(per_attribute, expected);
}

TEST(MetricValue, Definitions) {
  GroupConfusion c;
  c.group = "g";
  c.correct = 8;
  c.total = 10;
  c.fp_eligible = {4, 6, 5};
  c.false_positive = {1, 2, 0};
  EXPECT_DOUBLE_EQ(metric_value(c, Metric::accuracy), 0.8);
  EXPECT_DOUBLE_EQ(metric_value(c, Metric::positive_fpr), 0.0);
  EXPECT_DOUBLE_EQ(metric_value(c, Metric::negative_fpr), 0.25);
}

TEST(MetricValue, ZeroDenominatorIsUndefined) {
  // Only negative gold examples: nothing is eligible for a negative false positive.
  const std::vector<GroupPrediction> preds{pred("old", N, N), pred("old", N, U)};
  const auto conf = tally(preds).at({"age", "old"});
  EXPECT_FALSE(metric_defined(conf, Metric::negative_fpr));
  try {
    metric_value(conf, Metric::negative_fpr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined_metric);
    EXPECT_NE(std::string(e.what()).find("old"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("negative_fpr"), std::string::npos);
  }
  EXPECT_TRUE(metric_defined(conf, Metric::positive_fpr));
}

TEST(Gaps, OddCountAgainstMedian) {
  const auto t = gaps("age", {{"a", 0.1}, {"b", 0.2}, {"c", 0.4}});
  EXPECT_NEAR(t.center, 0.2, 1e-15);
  EXPECT_NEAR(t.gap.at("a"), -0.1, 1e-15);
  EXPECT_EQ(t.gap.at("b"), 0.0);
  EXPECT_NEAR(t.gap.at("c"), 0.2, 1e-15);
}

TEST(Gaps, EvenCountUsesMidpoint) {
  const auto t = gaps("age", {{"a", 0.1}, {"b", 0.3}});
  EXPECT_NEAR(t.center, 0.2, 1e-15);
  EXPECT_NEAR(t.gap.at("a"), -0.1, 1e-15);
  EXPECT_NEAR(t.gap.at("b"), 0.1, 1e-15);
}

TEST(Gaps, EqualValuesGiveZeroGaps) {
  const auto t = gaps("age", {{"a", 0.37}, {"b", 0.37}, {"c", 0.37}, {"d", 0.37}});
  for (const auto& [g, v] : t.gap) EXPECT_EQ(v, 0.0) << g;
}

TEST(Gaps, MeanCenterIsAvailable) {
  const auto t = gaps("age", {{"a", 0.1}, {"b", 0.2}, {"c", 0.6}}, Center::mean);
  EXPECT_NEAR(t.center, 0.3, 1e-15);
  EXPECT_NEAR(t.gap.at("c"), 0.3, 1e-15);
}

TEST(Gaps, SingleGroupIsAttributeError) {
  EXPECT_EQ(kind_of([] { gaps("age", {{"a", 0.1}}); }), ErrorKind::attribute);
}

TEST(Gaps, TranslationInvariant) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::string, double> values, shifted;
    const double c = u(rng) - 0.5;
    for (int g = 0; g < 2 + trial % 4; ++g) {
      const double v = u(rng);
      values["g" + std::to_string(g)] = v;
      shifted["g" + std::to_string(g)] = v + c;
    }
    const auto a = gaps("x", values);
    const auto b = gaps("x", shifted);
    for (const auto& [g, v] : a.gap) EXPECT_NEAR(v, b.gap.at(g), 1e-12);
  }
}

TEST(Gaps, OddCountHasExactlyOneZero) {
  const auto t = gaps("x", {{"a", 0.9}, {"b", 0.15}, {"c", 0.4}, {"d", 0.33}, {"e", 0.7}});
  int zeros = 0;
  for (const auto& [g, v] : t.gap) zeros += (v == 0.0);
  EXPECT_EQ(zeros, 1);
  EXPECT_EQ(t.gap.at("c"), 0.0);
}

TEST(Median, MatchesRankCountingOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(1, 9);
  std::uniform_int_distribution<int> val(0, 6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    for (auto& x : v) x = val(rng) / 6.0;
    EXPECT_EQ(median(v), oracle::median(v));
  }
}

TEST(StudentT, KnownQuantiles) {
  EXPECT_NEAR(student_t_quantile(0.975, 4), 2.776, 1e-3);
  EXPECT_NEAR(student_t_quantile(0.975, 1), 12.706, 1e-3);
  EXPECT_NEAR(student_t_quantile(0.975, 30), 2.042, 1e-3);
}

TEST(GapWithCi, PublishedStyleExample) {
  const std::vector<double> v{0.02, 0.03, 0.04, 0.03, 0.03};
  const auto iv = gap_with_ci(v, 0.95);
  EXPECT_NEAR(iv.mean, 0.03, 1e-12);
  EXPECT_NEAR(iv.low, 0.0212, 1e-4);
  EXPECT_NEAR(iv.high, 0.0388, 1e-4);
  EXPECT_TRUE(iv.significant);
  // s = sqrt(0.0002 / 4)
  EXPECT_NEAR((iv.high - iv.low) / 2, 2.776 * std::sqrt(0.00005) / std::sqrt(5.0), 1e-5);
}

TEST(GapWithCi, IdenticalValuesGiveZeroWidth) {
  const std::vector<double> v{0.05, 0.05, 0.05};
  const auto iv = gap_with_ci(v);
  EXPECT_EQ(iv.low, 0.05);
  EXPECT_EQ(iv.high, 0.05);
  EXPECT_TRUE(iv.significant);
}

TEST(GapWithCi, SymmetricValuesAreNotSignificant) {
  const std::vector<double> v{-0.01, 0.01};
  const auto iv = gap_with_ci(v);
  EXPECT_EQ(iv.mean, 0.0);
  EXPECT_LT(iv.low, 0.0);
  EXPECT_GT(iv.high, 0.0);
  EXPECT_FALSE(iv.significant);
}

TEST(GapWithCi, NeedsTwoValues) {
  const std::vector<double> one{0.1};
  EXPECT_EQ(kind_of([&] { gap_with_ci(one); }), ErrorKind::statistics);
}

TEST(GapWithCi, WidthShrinksWithMorePrompts) {
  // Alternating +-1 around 0.5 keeps the sample standard deviation near 1.
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 2; k <= 20; k += 2) {
    std::vector<double> v;
    for (int i = 0; i < k; ++i) v.push_back(0.5 + (i % 2 == 0 ? 1.0 : -1.0));
    const auto iv = gap_with_ci(v);
    const double s = std::sqrt(static_cast<double>(k) / (k - 1));
    const double width_per_s = (iv.high - iv.low) / s;
    EXPECT_LE(width_per_s, previous);
    previous = width_per_s;
  }
}

TEST(HarmDirection, Polarity) {
  EXPECT_EQ(harm_direction(Metric::positive_fpr, -0.1, true), Direction::harmful);
  EXPECT_EQ(harm_direction(Metric::positive_fpr, 0.1, true), Direction::favorable);
  EXPECT_EQ(harm_direction(Metric::negative_fpr, 0.1, true), Direction::harmful);
  EXPECT_EQ(harm_direction(Metric::negative_fpr, -0.1, true), Direction::favorable);
  EXPECT_EQ(harm_direction(Metric::accuracy, -0.1, true), Direction::harmful);
  EXPECT_EQ(harm_direction(Metric::accuracy, 0.0, true), Direction::neutral);
  EXPECT_EQ(harm_direction(Metric::accuracy, -0.3, false), Direction::neutral);
}

GapResult significant_result(const std::string& group, double gap, bool significant) {
  GapResult r;
  r.attribute = "sexuality";
  r.group = group;
  r.metric = Metric::positive_fpr;
  r.gap = gap;
  r.significant = significant;
  return r;
}

std::vector<ModelGaps> models_with(const std::vector<std::pair<double, bool>>& gaps_by_model) {
  std::vector<ModelGaps> out;
  for (std::size_t i = 0; i < gaps_by_model.size(); ++i) {
    out.push_back({"m" + std::to_string(i), "semeval",
                   {significant_result("asexual", gaps_by_model[i].first, gaps_by_model[i].second)}});
  }
  return out;
}

TEST(NetCounts, SixNegativeOneNonSignificant) {
  const auto cells = net_counts(models_with(
      {{-0.1, true}, {-0.1, true}, {-0.1, true}, {-0.1, true}, {-0.1, true}, {-0.1, true}, {0.2, false}}));
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].net, -6);
  EXPECT_EQ(cells[0].contributing.size(), 7u);
}

TEST(NetCounts, SixNegativeOnePositive) {
  const auto cells = net_counts(models_with(
      {{-0.1, true}, {-0.1, true}, {-0.1, true}, {-0.1, true}, {-0.1, true}, {-0.1, true}, {0.2, true}}));
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].net, -5);
  EXPECT_EQ(cells[0].direction, Direction::harmful);
  EXPECT_EQ(cells[0].contributing.back(), (std::pair<std::string, int>{"m6", 1}));
}

TEST(NetCounts, AllNonSignificantIsZero) {
  const auto cells = net_counts(models_with({{-0.1, false}, {0.3, false}, {0.0, false}}));
  EXPECT_EQ(cells[0].net, 0);
  EXPECT_EQ(cells[0].direction, Direction::neutral);
}

TEST(NetCounts, DuplicateModelIsAggregationError) {
  auto models = models_with({{-0.1, true}, {0.1, true}});
  models[1].model = models[0].model;
  EXPECT_EQ(kind_of([&] { net_counts(models); }), ErrorKind::aggregation);
}

TEST(NetCounts, FlippingSignsNegatesNet) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<double, bool>> g, flipped;
    for (int m = 0; m < 7; ++m) {
      const double v = u(rng);
      const bool sig = u(rng) > 0;
      g.push_back({v, sig});
      flipped.push_back({-v, sig});
    }
    const int a = net_counts(models_with(g))[0].net;
    const int b = net_counts(models_with(flipped))[0].net;
    EXPECT_EQ(a, -b);
    EXPECT_LE(std::abs(a), 7);
  }
}

TEST(NetCounts, CsvLayout) {
  const auto cells = net_counts(models_with({{-0.1, true}, {0.1, false}}));
  EXPECT_EQ(format_net_counts_csv(cells),
            "attribute,group,metric,dataset,net,signs,direction\n"
            "sexuality,asexual,positive_fpr,semeval,-1,m0:-1;m1:0,harmful\n");
}

TEST(GapReport, MatchesBruteForceOracle) {
  std::mt19937_64 rng(20);
  int cells = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto expected = oracle::expected_gaps(inst);
    const auto report = compute_gap_report(oracle::to_predictions(inst));
    EXPECT_LE(oracle::max_discrepancy(expected, report.results), 1e-12) << "trial " << trial;
    cells += static_cast<int>(expected.size());
  }
  EXPECT_GT(cells, 200);
}

TEST(GapReport, CiContainsGapAndOrderIsStable) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto report = compute_gap_report(oracle::to_predictions(oracle::random_instance(rng)));
    for (std::size_t i = 0; i < report.results.size(); ++i) {
      const auto& r = report.results[i];
      EXPECT_LE(r.ci_low, r.gap + 1e-15);
      EXPECT_GE(r.ci_high, r.gap - 1e-15);
      EXPECT_EQ(r.significant, r.ci_low > 0.0 || r.ci_high < 0.0);
      if (i > 0) {
        const auto& q = report.results[i - 1];
        EXPECT_LE(std::tie(q.attribute, q.metric, q.group), std::tie(r.attribute, r.metric, r.group));
      }
    }
  }
}

TEST(GapReport, UndefinedCellsAreAbsentWithWarning) {
  // Group "c" only has positive gold, so positive_fpr is undefined for it.
  const std::vector<GroupPrediction> p1{pred("a", N, P), pred("a", P, P), pred("b", U, U), pred("b", P, N),
                                        pred("c", P, P), pred("c", P, N)};
  auto p2 = p1;
  p2[0].predicted = N;
  const auto report = compute_gap_report({p1, p2});
  int positive_fpr_cells = 0;
  for (const auto& r : report.results) {
    if (r.metric == Metric::positive_fpr) {
      ++positive_fpr_cells;
      EXPECT_NE(r.group, "c");
    }
  }
  EXPECT_EQ(positive_fpr_cells, 2);
  ASSERT_FALSE(report.warnings.empty());
  EXPECT_NE(report.warnings[0].find("age/c"), std::string::npos);
}

TEST(GapReport, NeedsTwoPrompts) {
  EXPECT_EQ(kind_of([] { compute_gap_report({{pred("a", N, N), pred("b", N, N)}}); }), ErrorKind::statistics);
}

TEST(GapReport, GapOfMeansAlternative) {
  std::mt19937_64 rng(22);
  const auto preds = oracle::to_predictions(oracle::random_instance(rng));
  GapOptions opts;
  opts.aggregation = Aggregation::gap_of_means;
  const auto a = compute_gap_report(preds, opts);
  const auto b = compute_gap_report(preds);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    EXPECT_NEAR(a.results[i].value, b.results[i].value, 1e-15);
    EXPECT_NEAR(a.results[i].gap, a.results[i].value - a.results[i].median, 1e-12);
  }
}

TEST(GapReport, JsonRoundTrip) {
  std::mt19937_64 rng(23);
  const auto report = compute_gap_report(oracle::to_predictions(oracle::random_instance(rng)));
  for (const auto& r : report.results) {
    const auto j = to_json(r);
    for (const char* key : {"attribute", "group", "metric", "value", "median", "gap", "per_prompt_values", "ci_low",
                            "ci_high", "significant", "direction_harmful"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(to_json(gap_result_from_json(j)), j);
  }
}

}  // namespace
}  // namespace pbl
