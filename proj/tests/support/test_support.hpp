#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pbl/fairness.hpp"
#include "pbl/model.hpp"

namespace pbl::testing {

std::filesystem::path data_dir();
std::filesystem::path source_dir();

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "pbl-test");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// 2 layers, d=128, 4 heads, 64 positions.
ModelConfig toy_config(int vocab_size = 64);

ModelWeights random_weights(const ModelConfig& config, std::uint64_t seed, double scale = 0.02);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

/// Independent recomputation of per-group metric values from raw
/// (attribute, group, gold, pred) tuples: counts by direct filtering, no
/// shared code with the library's tally.
namespace oracle {

struct Row {
  std::string attribute;
  std::string group;
  int gold = 0;
  int pred = 0;
};

/// nullopt-like: `defined` false when the denominator is zero.
struct Value {
  bool defined = false;
  double value = 0.0;
};

Value metric(const std::vector<Row>& rows, const std::string& attribute, const std::string& group,
             const std::string& metric);

/// Median by exhaustive rank counting: an element is a median candidate when
/// at most half of the values are below and at most half above it.
double median(const std::vector<double>& values);

/// Same gold labels for every prompt, independent predictions per prompt.
struct Instance {
  std::vector<std::vector<Row>> per_prompt;
};

/// 1-2 attributes with 2-5 groups each, 1-20 examples per group, 2-6 prompts.
/// Gold labels are skewed so some groups leave a metric undefined.
Instance random_instance(std::mt19937_64& rng);

std::vector<std::vector<GroupPrediction>> to_predictions(const Instance& instance);

struct ExpectedGap {
  std::string attribute;
  std::string group;
  std::string metric;
  std::vector<double> per_prompt_values;
  std::vector<double> per_prompt_gaps;
  double value = 0.0;
  double median = 0.0;
  double gap = 0.0;
};

/// Median-centred per-prompt gaps averaged over prompts, for every
/// (attribute, metric) with at least two groups defined in every prompt.
std::vector<ExpectedGap> expected_gaps(const Instance& instance);

/// Largest absolute difference between the report and the oracle; infinity
/// when the set of reported cells differs.
double max_discrepancy(const std::vector<ExpectedGap>& expected, const std::vector<GapResult>& results);

}  // namespace oracle

}  // namespace pbl::testing
