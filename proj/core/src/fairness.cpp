#include "pbl/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "pbl/error.hpp"

namespace pbl {

namespace {

int metric_class(Metric m) { return m == Metric::positive_fpr ? class_index(Sentiment::positive) : class_index(Sentiment::negative); }

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

const char* to_string(Metric m) noexcept {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::positive_fpr: return "positive_fpr";
    case Metric::negative_fpr: return "negative_fpr";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  for (auto m : kAllMetrics) {
    if (name == to_string(m)) return m;
  }
  fail(ErrorKind::data, "unknown metric '" + std::string(name) + "'");
}

const char* to_string(Direction d) noexcept {
  switch (d) {
    case Direction::harmful: return "harmful";
    case Direction::favorable: return "favorable";
    case Direction::neutral: return "neutral";
  }
  return "?";
}

std::vector<GroupPrediction> group_predictions(std::span<const EvalExample> examples,
                                               std::span<const Sentiment> predicted) {
  if (examples.size() != predicted.size()) fail(ErrorKind::data, "prediction count does not match example count");
  std::vector<GroupPrediction> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out.push_back({examples[i].attribute, examples[i].group, examples[i].label, predicted[i]});
  }
  return out;
}

ConfusionTable tally(std::span<const GroupPrediction> predictions) {
  if (predictions.empty()) fail(ErrorKind::data, "no predictions to tally");
  ConfusionTable table;
  for (const auto& p : predictions) {
    const int gold = class_index(p.gold);
    const int pred = class_index(p.predicted);
    if (gold < 0 || gold >= kNumClasses || pred < 0 || pred >= kNumClasses) {
      fail(ErrorKind::data, "class index out of range in predictions");
    }
    auto& c = table[{p.attribute, p.group}];
    c.attribute = p.attribute;
    c.group = p.group;
    ++c.total;
    if (gold == pred) {
      ++c.correct;
      ++c.true_positive[static_cast<std::size_t>(gold)];
    }
    for (int k = 0; k < kNumClasses; ++k) {
      if (gold != k) {
        ++c.fp_eligible[static_cast<std::size_t>(k)];
        if (pred == k) ++c.false_positive[static_cast<std::size_t>(k)];
      }
    }
  }
  return table;
}

bool metric_defined(const GroupConfusion& conf, Metric metric) {
  if (metric == Metric::accuracy) return conf.total > 0;
  return conf.fp_eligible[static_cast<std::size_t>(metric_class(metric))] > 0;
}

double metric_value(const GroupConfusion& conf, Metric metric) {
  if (!metric_defined(conf, metric)) {
    fail(ErrorKind::undefined_metric,
         std::string(to_string(metric)) + " is undefined for group '" + conf.group + "' (zero denominator)");
  }
  if (metric == Metric::accuracy) return static_cast<double>(conf.correct) / static_cast<double>(conf.total);
  const auto c = static_cast<std::size_t>(metric_class(metric));
  return static_cast<double>(conf.false_positive[c]) / static_cast<double>(conf.fp_eligible[c]);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

GapTable gaps(const std::string& attribute, const std::map<std::string, double>& values, Center center) {
  if (values.size() < 2) {
    fail(ErrorKind::attribute, "attribute '" + attribute + "' needs at least two groups, has " +
                                   std::to_string(values.size()));
  }
  std::vector<double> xs;
  xs.reserve(values.size());
  for (const auto& [_, v] : values) xs.push_back(v);
  GapTable t;
  t.center = center == Center::median ? median(xs) : mean_of(xs);
  for (const auto& [g, v] : values) t.gap[g] = v - t.center;
  return t;
}

double student_t_quantile(double p, int degrees_of_freedom) {
  if (degrees_of_freedom < 1) fail(ErrorKind::statistics, "t quantile needs at least one degree of freedom");
  const boost::math::students_t dist(static_cast<double>(degrees_of_freedom));
  return boost::math::quantile(dist, p);
}

Interval gap_with_ci(std::span<const double> values, double confidence) {
  if (values.size() < 2) fail(ErrorKind::statistics, "confidence interval needs at least two values");
  if (!(confidence > 0.0 && confidence < 1.0)) fail(ErrorKind::statistics, "confidence must lie in (0, 1)");
  const auto k = static_cast<double>(values.size());
  Interval iv;
  // Shifted by the first value so identical inputs give exactly that value and zero width.
  const double shift = values.front();
  double offset = 0.0;
  for (double v : values) offset += v - shift;
  offset /= k;
  iv.mean = shift + offset;
  double ss = 0.0;
  for (double v : values) ss += (v - shift - offset) * (v - shift - offset);
  const double sd = std::sqrt(ss / (k - 1.0));
  const double half = student_t_quantile(0.5 + confidence / 2.0, static_cast<int>(values.size()) - 1) * sd / std::sqrt(k);
  iv.low = iv.mean - half;
  iv.high = iv.mean + half;
  iv.significant = iv.low > 0.0 || iv.high < 0.0;
  return iv;
}

Direction harm_direction(Metric metric, double gap, bool significant) {
  if (!significant || gap == 0.0) return Direction::neutral;
  const bool positive = gap > 0.0;
  switch (metric) {
    case Metric::negative_fpr: return positive ? Direction::harmful : Direction::favorable;
    case Metric::positive_fpr:
    case Metric::accuracy: return positive ? Direction::favorable : Direction::harmful;
  }
  return Direction::neutral;
}

nlohmann::json to_json(const GapResult& r) {
  return {{"attribute", r.attribute},
          {"group", r.group},
          {"metric", to_string(r.metric)},
          {"value", r.value},
          {"median", r.median},
          {"gap", r.gap},
          {"per_prompt_values", r.per_prompt_values},
          {"per_prompt_gaps", r.per_prompt_gaps},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"significant", r.significant},
          {"direction_harmful", r.direction_harmful}};
}

GapResult gap_result_from_json(const nlohmann::json& j) {
  GapResult r;
  try {
    r.attribute = j.at("attribute").get<std::string>();
    r.group = j.at("group").get<std::string>();
    r.metric = parse_metric(j.at("metric").get<std::string>());
    r.value = j.at("value").get<double>();
    r.median = j.at("median").get<double>();
    r.gap = j.at("gap").get<double>();
    r.per_prompt_values = j.at("per_prompt_values").get<std::vector<double>>();
    r.per_prompt_gaps = j.at("per_prompt_gaps").get<std::vector<double>>();
    r.ci_low = j.at("ci_low").get<double>();
    r.ci_high = j.at("ci_high").get<double>();
    r.significant = j.at("significant").get<bool>();
    r.direction_harmful = j.at("direction_harmful").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("malformed gap result: ") + e.what());
  }
  return r;
}

GapReport compute_gap_report(const std::vector<std::vector<GroupPrediction>>& per_prompt, const GapOptions& options) {
  if (per_prompt.size() < 2) fail(ErrorKind::statistics, "gap report needs predictions from at least two prompts");
  std::vector<ConfusionTable> tables;
  tables.reserve(per_prompt.size());
  for (const auto& preds : per_prompt) tables.push_back(tally(preds));

  std::map<std::string, std::set<std::string>> groups;
  for (const auto& t : tables) {
    for (const auto& [key, _] : t) groups[key.first].insert(key.second);
  }

  GapReport report;
  const auto k = per_prompt.size();
  for (const auto& [attribute, names] : groups) {
    for (Metric metric : kAllMetrics) {
      std::vector<std::string> defined;
      for (const auto& g : names) {
        bool ok = true;
        for (const auto& t : tables) {
          const auto it = t.find({attribute, g});
          ok = ok && it != t.end() && metric_defined(it->second, metric);
        }
        if (ok) {
          defined.push_back(g);
        } else {
          report.warnings.push_back(std::string(to_string(metric)) + " undefined for " + attribute + "/" + g +
                                    "; cell reported as absent");
        }
      }
      if (defined.size() < 2) {
        report.warnings.push_back(std::string(to_string(metric)) + " skipped for attribute " + attribute +
                                  ": fewer than two groups with a defined value");
        continue;
      }

      // values[g][p]
      std::map<std::string, std::vector<double>> values;
      std::vector<double> centers;
      for (std::size_t p = 0; p < k; ++p) {
        std::map<std::string, double> vals;
        for (const auto& g : defined) {
          const double v = metric_value(tables[p].at({attribute, g}), metric);
          vals[g] = v;
          values[g].push_back(v);
        }
        if (options.aggregation == Aggregation::mean_of_gaps) centers.push_back(gaps(attribute, vals, options.center).center);
      }

      double shared_center = 0.0;
      if (options.aggregation == Aggregation::gap_of_means) {
        std::map<std::string, double> means;
        for (const auto& g : defined) means[g] = mean_of(values[g]);
        shared_center = gaps(attribute, means, options.center).center;
      }

      for (const auto& g : defined) {
        GapResult r;
        r.attribute = attribute;
        r.group = g;
        r.metric = metric;
        r.per_prompt_values = values[g];
        r.value = mean_of(r.per_prompt_values);
        if (options.aggregation == Aggregation::mean_of_gaps) {
          for (std::size_t p = 0; p < k; ++p) r.per_prompt_gaps.push_back(r.per_prompt_values[p] - centers[p]);
          r.median = mean_of(centers);
          const auto iv = gap_with_ci(r.per_prompt_gaps, options.confidence);
          r.gap = iv.mean;
          r.ci_low = iv.low;
          r.ci_high = iv.high;
          r.significant = iv.significant;
        } else {
          for (double v : r.per_prompt_values) r.per_prompt_gaps.push_back(v - shared_center);
          r.median = shared_center;
          const auto iv = gap_with_ci(r.per_prompt_values, options.confidence);
          r.gap = iv.mean - shared_center;
          r.ci_low = iv.low - shared_center;
          r.ci_high = iv.high - shared_center;
          r.significant = r.ci_low > 0.0 || r.ci_high < 0.0;
        }
        r.direction_harmful = harm_direction(metric, r.gap, r.significant) == Direction::harmful;
        report.results.push_back(std::move(r));
      }
    }
  }
  return report;
}

std::vector<NetCountCell> net_counts(std::span<const ModelGaps> models) {
  using CellKey = std::tuple<std::string, std::string, int, std::string>;
  std::map<CellKey, NetCountCell> cells;
  for (const auto& m : models) {
    for (const auto& r : m.results) {
      const CellKey key{r.attribute, r.group, static_cast<int>(r.metric), m.dataset};
      auto& cell = cells[key];
      cell.attribute = r.attribute;
      cell.group = r.group;
      cell.metric = r.metric;
      cell.dataset = m.dataset;
      for (const auto& [name, _] : cell.contributing) {
        if (name == m.model) {
          fail(ErrorKind::aggregation, "model '" + m.model + "' contributes twice to " + r.attribute + "/" + r.group +
                                           "/" + to_string(r.metric) + "/" + m.dataset);
        }
      }
      int sign = 0;
      if (r.significant && r.gap > 0.0) sign = 1;
      if (r.significant && r.gap < 0.0) sign = -1;
      cell.contributing.emplace_back(m.model, sign);
      cell.net += sign;
    }
  }
  std::vector<NetCountCell> out;
  out.reserve(cells.size());
  for (auto& [_, cell] : cells) {
    cell.direction = harm_direction(cell.metric, static_cast<double>(cell.net), cell.net != 0);
    out.push_back(std::move(cell));
  }
  return out;
}

std::string format_net_counts_csv(std::span<const NetCountCell> cells) {
  std::string out = "attribute,group,metric,dataset,net,signs,direction\n";
  for (const auto& c : cells) {
    std::string signs;
    for (const auto& [model, sign] : c.contributing) {
      if (!signs.empty()) signs += ';';
      signs += model + ':' + (sign > 0 ? "+1" : sign < 0 ? "-1" : "0");
    }
    out += c.attribute + ',' + c.group + ',' + to_string(c.metric) + ',' + c.dataset + ',' + std::to_string(c.net) +
           ',' + signs + ',' + to_string(c.direction) + '\n';
  }
  return out;
}

}  // namespace pbl
