#include "pbl/datasets.hpp"

#include <charconv>
#include <fstream>
#include <iterator>

#include "pbl/error.hpp"

namespace pbl {

namespace {

constexpr std::string_view kHeader = "text\traw_label\tsplit";

std::string at_line(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line) + ": "; }

}  // namespace

const char* to_string(Sentiment s) noexcept {
  switch (s) {
    case Sentiment::negative: return "negative";
    case Sentiment::neutral: return "neutral";
    case Sentiment::positive: return "positive";
  }
  return "?";
}

Sentiment parse_sentiment(std::string_view name) {
  if (name == "negative") return Sentiment::negative;
  if (name == "neutral") return Sentiment::neutral;
  if (name == "positive") return Sentiment::positive;
  fail(ErrorKind::label, "unknown sentiment '" + std::string(name) + "'");
}

Sentiment map_semeval_label(int raw) {
  if (raw < -3 || raw > 3) fail(ErrorKind::label, "SemEval valence " + std::to_string(raw) + " outside [-3, 3]");
  if (raw <= -2) return Sentiment::negative;
  if (raw <= 1) return Sentiment::neutral;
  return Sentiment::positive;
}

Sentiment map_sst5_label(std::string_view raw) {
  if (raw == "very-negative" || raw == "negative") return Sentiment::negative;
  if (raw == "neutral") return Sentiment::neutral;
  if (raw == "positive" || raw == "very-positive") return Sentiment::positive;
  fail(ErrorKind::label, "unknown SST-5 label '" + std::string(raw) + "'");
}

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "semeval") return DatasetFormat::semeval;
  if (name == "sst5") return DatasetFormat::sst5;
  fail(ErrorKind::config, "unknown dataset format '" + std::string(name) + "' (expected semeval or sst5)");
}

const char* to_string(DatasetFormat f) noexcept { return f == DatasetFormat::semeval ? "semeval" : "sst5"; }

Sentiment map_raw_label(DatasetFormat format, std::string_view raw) {
  if (format == DatasetFormat::sst5) return map_sst5_label(raw);
  int value = 0;
  const auto* end = raw.data() + raw.size();
  const auto [ptr, ec] = std::from_chars(raw.data(), end, value);
  if (ec != std::errc() || ptr != end) fail(ErrorKind::label, "SemEval label '" + std::string(raw) + "' is not an integer");
  return map_semeval_label(value);
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  fail(ErrorKind::data, "unknown split '" + std::string(name) + "'");
}

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<TaskRow> parse_task_rows(std::string_view contents, DatasetFormat format, const std::string& source) {
  std::vector<TaskRow> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_header = false;
  while (pos < contents.size()) {
    auto nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!saw_header) {
      if (line != kHeader) fail(ErrorKind::data, at_line(source, line_no) + "expected header 'text<TAB>raw_label<TAB>split'");
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos) {
      fail(ErrorKind::data, at_line(source, line_no) + "expected exactly 3 tab-separated columns");
    }
    TaskRow row;
    row.text = std::string(line.substr(0, t1));
    row.raw_label = std::string(line.substr(t1 + 1, t2 - t1 - 1));
    try {
      row.split = parse_split(line.substr(t2 + 1));
      map_raw_label(format, row.raw_label);
    } catch (const Error& e) {
      fail(ErrorKind::data, at_line(source, line_no) + e.what());
    }
    if (Tokenizer::split(row.text).empty()) fail(ErrorKind::data, at_line(source, line_no) + "text has no tokens");
    rows.push_back(std::move(row));
  }
  if (!saw_header) fail(ErrorKind::data, source + ": missing header row");
  return rows;
}

std::vector<TaskRow> read_task_rows(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open dataset " + path.string());
  const std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_task_rows(contents, format, path.string());
}

std::string format_task_rows(const std::vector<TaskRow>& rows) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.text;
    out += '\t';
    out += r.raw_label;
    out += '\t';
    out += to_string(r.split);
    out += '\n';
  }
  return out;
}

void write_task_rows(const std::filesystem::path& path, const std::vector<TaskRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << format_task_rows(rows);
}

TaskDataset build_task_dataset(const std::vector<TaskRow>& rows, DatasetFormat format, const Tokenizer& tokenizer,
                               const std::string& source) {
  TaskDataset ds;
  ds.format = format;
  for (const auto& r : rows) {
    LabeledExample ex{r.text, tokenizer.encode(r.text), map_raw_label(format, r.raw_label), r.raw_label};
    switch (r.split) {
      case Split::train: ds.train.push_back(std::move(ex)); break;
      case Split::validation: ds.validation.push_back(std::move(ex)); break;
      case Split::test: ds.test.push_back(std::move(ex)); break;
    }
  }
  if (ds.train.empty()) fail(ErrorKind::data, source + ": no train rows");
  if (ds.validation.empty()) fail(ErrorKind::data, source + ": no validation rows (prompt selection needs them)");
  return ds;
}

TaskDataset load_task_dataset(const std::filesystem::path& path, DatasetFormat format, const Tokenizer& tokenizer) {
  return build_task_dataset(read_task_rows(path, format), format, tokenizer, path.string());
}

std::string serialize_task_dataset(const TaskDataset& dataset) {
  std::vector<TaskRow> rows;
  auto add = [&](const std::vector<LabeledExample>& xs, Split s) {
    for (const auto& x : xs) rows.push_back({x.text, x.raw_label, s});
  };
  add(dataset.train, Split::train);
  add(dataset.validation, Split::validation);
  add(dataset.test, Split::test);
  return format_task_rows(rows);
}

}  // namespace pbl
