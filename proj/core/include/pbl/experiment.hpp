#pragma once

// Experiment configuration, run manifest and the four pipeline stages.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbl/datasets.hpp"
#include "pbl/error.hpp"
#include "pbl/fairness.hpp"
#include "pbl/model.hpp"
#include "pbl/prompt_tuner.hpp"
#include "pbl/synthetic.hpp"
#include "pbl/templates.hpp"
#include "pbl/tokenizer.hpp"

namespace pbl {

// Seed streams derived from the root seed. Tuning runs use streams 1..n_seeds.
inline constexpr std::uint64_t kCorpusStream = 1'000'001;
inline constexpr std::uint64_t kPretrainStream = 1'000'002;
inline constexpr std::uint64_t kTaskStream = 1'000'003;

struct PretrainSection {
  std::optional<std::filesystem::path> corpus;  // one sentence per line; synthetic when empty
  int synthetic_sentences = 4000;
  int steps = 2000;
  int batch_size = 16;
  double learning_rate = 3e-3;
  int vocab_cap = Tokenizer::kDefaultVocabCap;
};

struct ModelSection {
  std::optional<std::filesystem::path> checkpoint;  // with `vocab`, skips pretraining
  std::optional<std::filesystem::path> vocab;
  ModelConfig architecture;  // vocab_size is set from the tokenizer
  PretrainSection pretrain;
};

struct TaskSection {
  DatasetFormat format = DatasetFormat::semeval;
  std::optional<std::filesystem::path> path;  // synthetic when empty
  SyntheticTaskOptions synthetic;
  std::string label;  // dataset column of the net-count table
};

struct ExtraRun {
  std::string model;
  std::string dataset;
  std::filesystem::path gaps;  // gaps.json of another run
};

struct ReportSection {
  GapOptions gap;
  std::vector<ExtraRun> extra_runs;
};

struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  int threads = 0;
  ModelSection model;
  TaskSection task;
  std::vector<std::filesystem::path> template_packs;
  TuningConfig tuning_base;
  std::vector<double> learning_rates{1e-3};
  std::vector<int> prompt_lengths{8};
  int n_seeds = 15;
  int top_k = 5;
  ReportSection report;

  std::string source_text;    // config file contents, copied verbatim into the run
  nlohmann::json effective;  // parsed config with command-line overrides applied

  std::vector<TuningConfig> grid() const;  // learning rate major, prompt length minor
  void validate() const;                   // config error; checks referenced paths
  std::string hash() const;                // sha256 of `effective` without output_dir
  std::string pretrain_hash() const;       // seed, model section, corpus contents and template packs
};

/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::optional<std::filesystem::path>& output_dir = std::nullopt,
                                        const std::optional<std::uint64_t>& seed = std::nullopt);

struct Artifact {
  std::string kind;  // checkpoint, vocab, prompt_snapshot, trace, predictions, report, ...
  std::string path;  // relative to the output directory
  std::string sha256;
};

struct StageRecord {
  std::string config_hash;
  double seconds = 0.0;
  std::vector<Artifact> artifacts;
  nlohmann::json info = nlohmann::json::object();
};

struct RunManifest {
  std::string version;
  std::string config_hash;
  std::map<std::string, StageRecord> stages;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const StageRecord& stage(const std::string& name) const;  // data error when absent
  std::vector<Artifact> artifacts(const std::string& stage, const std::string& kind) const;

  /// Throws an integrity error if a listed artifact is missing or its hash differs.
  void verify(const std::filesystem::path& root, const std::string& stage) const;
};

inline constexpr const char* kManifestName = "manifest.json";

/// Stage entry points. Each loads what earlier stages produced from
/// config.output_dir and appends its own record to the manifest.
std::filesystem::path cmd_pretrain(const ExperimentConfig& config, std::ostream& log);
std::vector<std::filesystem::path> cmd_tune(const ExperimentConfig& config, std::ostream& out, std::ostream& log);
std::vector<std::filesystem::path> cmd_evaluate(const ExperimentConfig& config, std::ostream& log);
std::filesystem::path cmd_report(const ExperimentConfig& config, std::ostream& log);

/// 2 config error, 3 training failure, 4 data error.
int exit_code_for(ErrorKind kind);

/// Runs `command` (pretrain, tune, evaluate, report or run). Returns 0 on success,
/// exit_code_for(kind) on a library error and 1 on anything unexpected.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::optional<std::filesystem::path>& output_dir, const std::optional<std::uint64_t>& seed,
                std::ostream& out, std::ostream& log);

}  // namespace pbl
