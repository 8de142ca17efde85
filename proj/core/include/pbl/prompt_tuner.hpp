#pragma once

// Soft-prompt tuning against a frozen ModelWeights.
//
// The prompt occupies the first n positions of every input. Slot i carries
// base_embedding + perturbation[i], where base_embedding is the BOS token
// embedding and perturbation starts at zero. Only the perturbation and its
// Adam moments change during training.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbl/adam.hpp"
#include "pbl/datasets.hpp"
#include "pbl/model.hpp"

namespace pbl {

struct PromptState {
  Matrix<float> perturbation;  // n x embed_dim, trainable
  RowVector<float> base_embedding;
  Matrix<float> adam_m;
  Matrix<float> adam_v;
  std::int64_t step_count = 0;

  int size() const { return static_cast<int>(perturbation.rows()); }
  Matrix<float> effective() const;
};

struct TuningConfig {
  double learning_rate = 1e-3;
  int n_prompt_tokens = 8;
  int batch_size = 32;
  int eval_interval = 100;
  int warmup_steps_before_stopping = 2500;
  int stopping_window = 5;
  int max_steps = 20000;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EvalPoint {
  std::int64_t step = 0;
  double loss = 0.0;

  bool operator==(const EvalPoint&) const = default;
};

struct TuningRunRecord {
  int seed_index = 0;     // 1-based position in the sweep's seed list
  std::uint64_t seed = 0;  // derived RNG seed actually used
  std::size_t grid_index = 0;
  TuningConfig config;
  double final_validation_accuracy = 0.0;
  std::int64_t steps_taken = 0;
  bool stopped_early = false;
  std::vector<EvalPoint> eval_loss_trace;
  PromptState prompt;
};

struct ParameterBudget {
  std::int64_t trainable = 0;
  std::int64_t total = 0;  // frozen language-model parameters
  double fraction() const { return static_cast<double>(trainable) / static_cast<double>(total); }
};

ParameterBudget parameter_budget(const ModelConfig& config, int n_prompt_tokens);

/// Zero perturbation on top of the BOS embedding. The seed does not influence
/// the state; it is accepted so call sites stay uniform with other seeded steps.
PromptState init_prompt(const ModelWeights& weights, int n, std::uint64_t seed);

/// Prompt rows followed by the example's token embeddings.
Matrix<float> prompted_inputs(const PromptState& prompt, const ModelWeights& weights, std::span<const int> token_ids);

/// Throws a capacity error if prompt + text + the target position exceed max_seq_len.
void check_fits(const ModelConfig& config, int n_prompt_tokens, std::span<const LabeledExample> examples);

/// One Adam step on the mean label cross-entropy of `batch`. Returns the batch
/// loss measured before the update.
double training_step(PromptState& prompt, const ModelWeights& weights, std::span<const LabeledExample> batch,
                     const TuningConfig& config);

/// True iff the latest evaluation is past the warmup, at least `stopping_window`
/// earlier evaluations exist, and the latest loss strictly exceeds their maximum.
bool should_stop(std::span<const EvalPoint> trace, const TuningConfig& config);

/// argmax over the verbalizer log-probabilities; ties go to the lower class index.
Sentiment predict(const PromptState& prompt, const ModelWeights& weights, std::span<const int> token_ids);

struct SplitScore {
  double loss = 0.0;      // mean negative label log-probability
  double accuracy = 0.0;
};

SplitScore score_split(const PromptState& prompt, const ModelWeights& weights, std::span<const LabeledExample> data);

/// Fraction of examples whose predicted class equals the gold label.
double validate(const PromptState& prompt, const ModelWeights& weights, std::span<const LabeledExample> data);

/// Trains one prompt until early stopping or max_steps; batches are drawn from
/// a per-epoch shuffle seeded by config.seed.
TuningRunRecord tune_prompt(const ModelWeights& weights, std::span<const LabeledExample> train,
                            std::span<const LabeledExample> validation, const TuningConfig& config);

/// splitmix64 finalizer over root + stream, used for every derived seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

struct SweepOptions {
  std::vector<TuningConfig> grid;  // per-config seeds are ignored
  int n_seeds = 15;
  int top_k = 5;
  std::uint64_t root_seed = 0;
  int threads = 0;  // 0: hardware concurrency
  std::function<void(const TuningRunRecord&)> on_run_finished;
};

struct SweepResult {
  std::size_t grid_index = 0;                // grid point the selection came from
  std::vector<double> grid_scores;           // mean top-k validation accuracy per grid point
  std::vector<TuningRunRecord> selected;     // best first
  std::vector<TuningRunRecord> runs;         // every surviving run, grid-major then seed order
  std::vector<std::string> failures;
};

/// Ranks by validation accuracy (descending), lower seed index first on ties.
std::vector<TuningRunRecord> select_top_k(std::vector<TuningRunRecord> runs, int top_k);

/// Trains n_seeds prompts per grid point and returns the top_k runs of the grid
/// point with the best mean top-k validation accuracy (earlier grid point on ties).
SweepResult run_sweep(const ModelWeights& weights, std::span<const LabeledExample> train,
                      std::span<const LabeledExample> validation, const SweepOptions& options);

struct PromptSnapshot {
  PromptState prompt;
  nlohmann::json metadata;
};

/// Same container as checkpoints; tensors perturbation, adam_m, adam_v.
std::string save_prompt_snapshot(const PromptState& prompt, const nlohmann::json& metadata,
                                 const std::filesystem::path& path);
PromptSnapshot load_prompt_snapshot(const std::filesystem::path& path, const ModelWeights& weights);

}  // namespace pbl
