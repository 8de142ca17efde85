#pragma once

// Directional group-fairness gaps.
//
// For a metric M and a sensitive attribute with groups x, the gap of x is
// M(x) minus the median of M over the attribute's groups. Gaps are computed
// per selected prompt and then summarised by their mean and a Student-t
// confidence interval across prompts.

#include <array>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbl/datasets.hpp"
#include "pbl/templates.hpp"

namespace pbl {

enum class Metric { accuracy, positive_fpr, negative_fpr };

inline constexpr std::array<Metric, 3> kAllMetrics = {Metric::accuracy, Metric::positive_fpr, Metric::negative_fpr};

const char* to_string(Metric m) noexcept;
Metric parse_metric(std::string_view name);

struct GroupPrediction {
  std::string attribute;
  std::string group;
  Sentiment gold = Sentiment::neutral;
  Sentiment predicted = Sentiment::neutral;
};

std::vector<GroupPrediction> group_predictions(std::span<const EvalExample> examples,
                                               std::span<const Sentiment> predicted);

struct GroupConfusion {
  std::string attribute;
  std::string group;
  std::array<int, kNumClasses> true_positive{};
  std::array<int, kNumClasses> fp_eligible{};     // gold label != c
  std::array<int, kNumClasses> false_positive{};  // gold != c, predicted c
  int correct = 0;
  int total = 0;
};

using GroupKey = std::pair<std::string, std::string>;  // (attribute, group)
using ConfusionTable = std::map<GroupKey, GroupConfusion>;

ConfusionTable tally(std::span<const GroupPrediction> predictions);

/// accuracy = correct/total; positive_fpr = FP_pos / N_pos; negative_fpr = FP_neg / N_neg.
/// Throws an undefined-metric error when the denominator is zero.
double metric_value(const GroupConfusion& conf, Metric metric);
bool metric_defined(const GroupConfusion& conf, Metric metric);

enum class Center { median, mean };

struct GapTable {
  double center = 0.0;
  std::map<std::string, double> gap;  // group -> value - center
};

/// Median of an even count is the midpoint of the two middle values.
double median(std::vector<double> values);

GapTable gaps(const std::string& attribute, const std::map<std::string, double>& values, Center center = Center::median);

struct Interval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
  bool significant = false;  // interval excludes zero
};

/// Two-sided Student-t quantile, e.g. student_t_quantile(0.975, 4) ~ 2.776.
double student_t_quantile(double p, int degrees_of_freedom);

/// mean +- t_{K-1,(1+confidence)/2} * s / sqrt(K), s the sample standard deviation.
Interval gap_with_ci(std::span<const double> values, double confidence = 0.95);

enum class Direction { harmful, favorable, neutral };
const char* to_string(Direction d) noexcept;

/// Harmful when a group benefits less from positive errors, is cast negatively
/// more often, or is classified less accurately than the median group.
Direction harm_direction(Metric metric, double gap, bool significant);

struct GapResult {
  std::string attribute;
  std::string group;
  Metric metric = Metric::accuracy;
  double value = 0.0;   // mean of per-prompt metric values
  double median = 0.0;  // mean of per-prompt centers
  double gap = 0.0;     // mean of per-prompt gaps
  std::vector<double> per_prompt_values;
  std::vector<double> per_prompt_gaps;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool significant = false;
  bool direction_harmful = false;
};

nlohmann::json to_json(const GapResult& r);
GapResult gap_result_from_json(const nlohmann::json& j);

enum class Aggregation {
  mean_of_gaps,  // per-prompt gaps, then mean and CI over prompts
  gap_of_means,  // CI over per-prompt metric values, shifted by the center of group means
};

struct GapOptions {
  double confidence = 0.95;
  Center center = Center::median;
  Aggregation aggregation = Aggregation::mean_of_gaps;
};

struct GapReport {
  std::vector<GapResult> results;    // ordered by attribute, metric, group
  std::vector<std::string> warnings;  // undefined metrics, skipped attributes
};

/// `per_prompt[k]` holds the predictions of the k-th selected prompt on the
/// same evaluation corpus.
GapReport compute_gap_report(const std::vector<std::vector<GroupPrediction>>& per_prompt,
                             const GapOptions& options = {});

struct ModelGaps {
  std::string model;
  std::string dataset;
  std::vector<GapResult> results;
};

struct NetCountCell {
  std::string attribute;
  std::string group;
  Metric metric = Metric::accuracy;
  std::string dataset;
  int net = 0;
  std::vector<std::pair<std::string, int>> contributing;  // (model, sign)
  Direction direction = Direction::neutral;
};

/// +1 per model with a significant positive gap, -1 per significant negative gap.
std::vector<NetCountCell> net_counts(std::span<const ModelGaps> models);

/// `attribute,group,metric,dataset,net,signs,direction`; signs are `model:+1;model:0;...`.
std::string format_net_counts_csv(std::span<const NetCountCell> cells);

}  // namespace pbl
