#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pbl/tokenizer.hpp"

namespace pbl {

enum class Sentiment : int { negative = 0, neutral = 1, positive = 2 };

inline constexpr int kNumClasses = 3;

const char* to_string(Sentiment s) noexcept;
Sentiment parse_sentiment(std::string_view name);
inline int class_index(Sentiment s) { return static_cast<int>(s); }

/// SemEval valence ordinals: -3,-2 -> negative; -1,0,1 -> neutral; 2,3 -> positive.
Sentiment map_semeval_label(int raw);

/// SST-5 names: very-negative/negative -> negative; neutral -> neutral;
/// positive/very-positive -> positive.
Sentiment map_sst5_label(std::string_view raw);

enum class DatasetFormat { semeval, sst5 };
DatasetFormat parse_dataset_format(std::string_view name);
const char* to_string(DatasetFormat f) noexcept;

/// Maps a raw label in the given format, accepting the textual form found in TSV files.
Sentiment map_raw_label(DatasetFormat format, std::string_view raw);

enum class Split { train, validation, test };
Split parse_split(std::string_view name);
const char* to_string(Split s) noexcept;

struct LabeledExample {
  std::string text;
  std::vector<int> token_ids;
  Sentiment label = Sentiment::neutral;
  std::string raw_label;

  bool operator==(const LabeledExample&) const = default;
};

struct TaskDataset {
  DatasetFormat format = DatasetFormat::semeval;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;

  bool operator==(const TaskDataset&) const = default;
};

/// One TSV row before tokenization.
struct TaskRow {
  std::string text;
  std::string raw_label;
  Split split = Split::train;
};

/// Parses `text<TAB>raw_label<TAB>split` with a required header row. Labels are
/// validated against `format`; errors name the offending line.
std::vector<TaskRow> read_task_rows(const std::filesystem::path& path, DatasetFormat format);
std::vector<TaskRow> parse_task_rows(std::string_view contents, DatasetFormat format,
                                     const std::string& source = "<memory>");
std::string format_task_rows(const std::vector<TaskRow>& rows);
void write_task_rows(const std::filesystem::path& path, const std::vector<TaskRow>& rows);

/// Loads and tokenizes the splits; row order within each split is preserved.
/// Requires non-empty train and validation splits.
TaskDataset load_task_dataset(const std::filesystem::path& path, DatasetFormat format, const Tokenizer& tokenizer);
TaskDataset build_task_dataset(const std::vector<TaskRow>& rows, DatasetFormat format, const Tokenizer& tokenizer,
                               const std::string& source = "<memory>");

/// Writes splits back in train, validation, test order.
std::string serialize_task_dataset(const TaskDataset& dataset);

}  // namespace pbl
