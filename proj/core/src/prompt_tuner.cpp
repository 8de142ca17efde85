#include "pbl/prompt_tuner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <thread>

#include "pbl/error.hpp"
#include "pbl/tensor_file.hpp"
#include "flush_denormals.hpp"

namespace pbl {

namespace {

constexpr const char* kSnapshotFormat = "pbl-prompt";

NamedTensor to_named(const std::string& name, const Matrix<float>& m) {
  return {name, {m.rows(), m.cols()}, std::vector<float>(m.data(), m.data() + m.size())};
}

Matrix<float> from_named(const NamedTensor& t, Eigen::Index rows, Eigen::Index cols, const std::string& source) {
  if (t.shape != std::vector<std::int64_t>{rows, cols}) {
    fail(ErrorKind::integrity, source + ": tensor '" + t.name + "' has unexpected shape");
  }
  Matrix<float> m(rows, cols);
  std::memcpy(m.data(), t.data.data(), t.data.size() * sizeof(float));
  return m;
}

}  // namespace

Matrix<float> PromptState::effective() const { return perturbation.rowwise() + base_embedding; }

void TuningConfig::validate() const {
  if (!(learning_rate > 0)) fail(ErrorKind::config, "learning_rate must be positive");
  if (n_prompt_tokens < 1) fail(ErrorKind::config, "n_prompt_tokens must be at least 1");
  if (batch_size < 1) fail(ErrorKind::config, "batch_size must be positive");
  if (eval_interval < 1) fail(ErrorKind::config, "eval_interval must be positive");
  if (warmup_steps_before_stopping < 0) fail(ErrorKind::config, "warmup_steps_before_stopping must be >= 0");
  if (stopping_window < 1) fail(ErrorKind::config, "stopping_window must be at least 1");
  if (max_steps < 1) fail(ErrorKind::config, "max_steps must be positive");
  if (weight_decay < 0) fail(ErrorKind::config, "weight_decay must be >= 0");
}

nlohmann::json TuningConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"n_prompt_tokens", n_prompt_tokens},
          {"batch_size", batch_size},
          {"eval_interval", eval_interval},
          {"warmup_steps_before_stopping", warmup_steps_before_stopping},
          {"stopping_window", stopping_window},
          {"max_steps", max_steps},
          {"seed", seed},
          {"weight_decay", weight_decay}};
}

ParameterBudget parameter_budget(const ModelConfig& config, int n_prompt_tokens) {
  return {static_cast<std::int64_t>(n_prompt_tokens) * config.embed_dim, config.parameter_count()};
}

PromptState init_prompt(const ModelWeights& weights, int n, std::uint64_t /*seed*/) {
  const auto& cfg = weights.config();
  if (n < 1) fail(ErrorKind::config, "prompt needs at least one token");
  if (n + 2 > cfg.max_seq_len) {
    fail(ErrorKind::capacity, std::to_string(n) + " prompt tokens leave no room for text within max_seq_len " +
                                  std::to_string(cfg.max_seq_len));
  }
  PromptState p;
  p.base_embedding = weights.parameters().token_embedding.row(kBosId);
  p.perturbation = Matrix<float>::Zero(n, cfg.embed_dim);
  p.adam_m = Matrix<float>::Zero(n, cfg.embed_dim);
  p.adam_v = Matrix<float>::Zero(n, cfg.embed_dim);
  return p;
}

Matrix<float> prompted_inputs(const PromptState& prompt, const ModelWeights& weights, std::span<const int> token_ids) {
  const auto& cfg = weights.config();
  const int n = prompt.size();
  Matrix<float> x(n + static_cast<Eigen::Index>(token_ids.size()), cfg.embed_dim);
  x.topRows(n) = prompt.effective();
  const auto& table = weights.parameters().token_embedding;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int id = token_ids[i];
    if (id < 0 || id >= cfg.vocab_size) fail(ErrorKind::vocabulary, "token id " + std::to_string(id) + " out of range");
    x.row(n + static_cast<Eigen::Index>(i)) = table.row(id);
  }
  return x;
}

void check_fits(const ModelConfig& config, int n_prompt_tokens, std::span<const LabeledExample> examples) {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto len = static_cast<int>(examples[i].token_ids.size());
    if (len == 0) fail(ErrorKind::data, "example " + std::to_string(i) + " has no tokens");
    if (n_prompt_tokens + len + 1 > config.max_seq_len) {
      fail(ErrorKind::capacity, "example " + std::to_string(i) + " ('" + examples[i].text + "') needs " +
                                    std::to_string(n_prompt_tokens + len + 1) + " positions, max_seq_len is " +
                                    std::to_string(config.max_seq_len));
    }
  }
}

double training_step(PromptState& prompt, const ModelWeights& weights, std::span<const LabeledExample> batch,
                     const TuningConfig& config) {
  const detail::FlushDenormals ftz;
  if (batch.empty()) fail(ErrorKind::data, "training batch is empty");
  check_fits(weights.config(), prompt.size(), batch);
  const Transformer<float> model(weights.config(), weights.parameters());
  const int n = prompt.size();

  Matrix<float> grad_sum = Matrix<float>::Zero(n, weights.config().embed_dim);
  Matrix<float> grad;
  double loss_sum = 0.0;
  for (const auto& ex : batch) {
    const auto inputs = prompted_inputs(prompt, weights, ex.token_ids);
    loss_sum += model.label_loss(inputs, {class_index(ex.label), {}, 1.0}, &grad);
    grad_sum += grad.topRows(n);
  }
  const double loss = loss_sum / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) fail(ErrorKind::numerical, "non-finite batch loss");
  grad_sum /= static_cast<float>(batch.size());
  if (!grad_sum.allFinite()) fail(ErrorKind::numerical, "non-finite prompt gradient");

  ++prompt.step_count;
  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  const auto size = static_cast<std::size_t>(prompt.perturbation.size());
  adam_update<float>(std::span<float>(prompt.perturbation.data(), size), std::span<const float>(grad_sum.data(), size),
                     std::span<float>(prompt.adam_m.data(), size), std::span<float>(prompt.adam_v.data(), size),
                     prompt.step_count, adam);
  return loss;
}

bool should_stop(std::span<const EvalPoint> trace, const TuningConfig& config) {
  if (trace.empty()) return false;
  const auto& latest = trace.back();
  if (latest.step <= config.warmup_steps_before_stopping) return false;
  const auto window = static_cast<std::size_t>(config.stopping_window);
  if (trace.size() < window + 1) return false;
  double prior_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = trace.size() - 1 - window; i + 1 < trace.size(); ++i) prior_max = std::max(prior_max, trace[i].loss);
  return latest.loss > prior_max;
}

Sentiment predict(const PromptState& prompt, const ModelWeights& weights, std::span<const int> token_ids) {
  const detail::FlushDenormals ftz;
  const Transformer<float> model(weights.config(), weights.parameters());
  const auto lp = model.label_log_probs(prompted_inputs(prompt, weights, token_ids), Verbalizers{});
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    if (lp[static_cast<std::size_t>(c)] > lp[static_cast<std::size_t>(best)]) best = c;
  }
  return static_cast<Sentiment>(best);
}

SplitScore score_split(const PromptState& prompt, const ModelWeights& weights, std::span<const LabeledExample> data) {
  const detail::FlushDenormals ftz;
  if (data.empty()) fail(ErrorKind::data, "cannot score an empty dataset");
  const Transformer<float> model(weights.config(), weights.parameters());
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    const auto lp = model.label_log_probs(prompted_inputs(prompt, weights, ex.token_ids), Verbalizers{});
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
      if (lp[static_cast<std::size_t>(c)] > lp[static_cast<std::size_t>(best)]) best = c;
    }
    if (best == class_index(ex.label)) ++correct;
    loss -= static_cast<double>(lp[static_cast<std::size_t>(class_index(ex.label))]);
  }
  const auto n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

double validate(const PromptState& prompt, const ModelWeights& weights, std::span<const LabeledExample> data) {
  return score_split(prompt, weights, data).accuracy;
}

TuningRunRecord tune_prompt(const ModelWeights& weights, std::span<const LabeledExample> train,
                            std::span<const LabeledExample> validation, const TuningConfig& config) {
  config.validate();
  if (train.empty()) fail(ErrorKind::data, "training split is empty");
  if (validation.empty()) fail(ErrorKind::data, "validation split is empty");
  check_fits(weights.config(), config.n_prompt_tokens, train);
  check_fits(weights.config(), config.n_prompt_tokens, validation);

  TuningRunRecord record;
  record.seed = config.seed;
  record.config = config;
  record.prompt = init_prompt(weights, config.n_prompt_tokens, config.seed);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  std::vector<LabeledExample> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));
  for (int step = 1; step <= config.max_steps; ++step) {
    batch.clear();
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(train[order[cursor++]]);
    }
    training_step(record.prompt, weights, batch, config);
    if (step % config.eval_interval == 0) {
      const auto score = score_split(record.prompt, weights, validation);
      if (!std::isfinite(score.loss)) fail(ErrorKind::numerical, "non-finite evaluation loss");
      record.eval_loss_trace.push_back({step, score.loss});
      if (should_stop(record.eval_loss_trace, config)) {
        record.stopped_early = true;
        break;
      }
    }
  }
  record.steps_taken = record.prompt.step_count;
  record.final_validation_accuracy = validate(record.prompt, weights, validation);
  return record;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<TuningRunRecord> select_top_k(std::vector<TuningRunRecord> runs, int top_k) {
  if (top_k < 1) fail(ErrorKind::config, "top_k must be at least 1");
  if (static_cast<int>(runs.size()) < top_k) {
    fail(ErrorKind::sweep, "only " + std::to_string(runs.size()) + " runs available, need " + std::to_string(top_k));
  }
  std::stable_sort(runs.begin(), runs.end(), [](const TuningRunRecord& a, const TuningRunRecord& b) {
    if (a.final_validation_accuracy != b.final_validation_accuracy) {
      return a.final_validation_accuracy > b.final_validation_accuracy;
    }
    return a.seed_index < b.seed_index;
  });
  runs.resize(static_cast<std::size_t>(top_k));
  return runs;
}

SweepResult run_sweep(const ModelWeights& weights, std::span<const LabeledExample> train,
                      std::span<const LabeledExample> validation, const SweepOptions& options) {
  if (options.grid.empty()) fail(ErrorKind::config, "sweep grid is empty");
  if (options.top_k < 1 || options.n_seeds < options.top_k) {
    fail(ErrorKind::config, "sweep needs 1 <= top_k <= n_seeds (top_k=" + std::to_string(options.top_k) +
                                ", n_seeds=" + std::to_string(options.n_seeds) + ")");
  }
  for (const auto& cfg : options.grid) {
    cfg.validate();
    check_fits(weights.config(), cfg.n_prompt_tokens, train);
    check_fits(weights.config(), cfg.n_prompt_tokens, validation);
  }

  struct Job {
    std::size_t grid_index;
    int seed_index;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < options.grid.size(); ++g) {
    for (int s = 1; s <= options.n_seeds; ++s) jobs.push_back({g, s});
  }

  std::vector<std::optional<TuningRunRecord>> results(jobs.size());
  std::vector<std::string> failure_by_job(jobs.size());
  std::vector<std::exception_ptr> fatal(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;

  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto& job = jobs[j];
      TuningConfig cfg = options.grid[job.grid_index];
      cfg.seed = derive_seed(options.root_seed, static_cast<std::uint64_t>(job.seed_index));
      try {
        auto record = tune_prompt(weights, train, validation, cfg);
        record.seed_index = job.seed_index;
        record.grid_index = job.grid_index;
        if (options.on_run_finished) {
          std::lock_guard lock(callback_mutex);
          options.on_run_finished(record);
        }
        results[j] = std::move(record);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::numerical) {
          failure_by_job[j] = "grid " + std::to_string(job.grid_index) + " seed " + std::to_string(job.seed_index) +
                              ": " + e.what();
        } else {
          fatal[j] = std::current_exception();
        }
      } catch (...) {
        fatal[j] = std::current_exception();
      }
    }
  };

  unsigned threads = options.threads > 0 ? static_cast<unsigned>(options.threads) : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : fatal) {
    if (e) std::rethrow_exception(e);
  }

  SweepResult result;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (!failure_by_job[j].empty()) result.failures.push_back(failure_by_job[j]);
    if (results[j]) result.runs.push_back(*results[j]);
  }

  bool found = false;
  double best_score = 0.0;
  for (std::size_t g = 0; g < options.grid.size(); ++g) {
    std::vector<TuningRunRecord> mine;
    for (const auto& r : result.runs) {
      if (r.grid_index == g) mine.push_back(r);
    }
    if (static_cast<int>(mine.size()) < options.top_k) {
      result.grid_scores.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    auto top = select_top_k(std::move(mine), options.top_k);
    double score = 0.0;
    for (const auto& r : top) score += r.final_validation_accuracy;
    score /= static_cast<double>(top.size());
    result.grid_scores.push_back(score);
    if (!found || score > best_score) {
      found = true;
      best_score = score;
      result.grid_index = g;
      result.selected = std::move(top);
    }
  }
  if (!found) {
    fail(ErrorKind::sweep, "fewer than top_k=" + std::to_string(options.top_k) +
                               " runs survived for every grid point (" + std::to_string(result.failures.size()) +
                               " failures)");
  }
  return result;
}

std::string save_prompt_snapshot(const PromptState& prompt, const nlohmann::json& metadata,
                                 const std::filesystem::path& path) {
  nlohmann::json header = {{"format", kSnapshotFormat},
                           {"version", 1},
                           {"n_prompt_tokens", prompt.size()},
                           {"embed_dim", prompt.perturbation.cols()},
                           {"step", prompt.step_count},
                           {"metadata", metadata}};
  return write_tensor_file(path, header,
                           {to_named("perturbation", prompt.perturbation), to_named("adam_m", prompt.adam_m),
                            to_named("adam_v", prompt.adam_v)});
}

PromptSnapshot load_prompt_snapshot(const std::filesystem::path& path, const ModelWeights& weights) {
  const auto file = read_tensor_file(path);
  if (file.header.value("format", std::string()) != kSnapshotFormat) {
    fail(ErrorKind::format, path.string() + ": not a prompt snapshot");
  }
  const auto n = file.header.value("n_prompt_tokens", 0);
  const auto d = file.header.value("embed_dim", 0);
  if (d != weights.config().embed_dim) {
    fail(ErrorKind::compatibility, path.string() + ": embed_dim " + std::to_string(d) + " does not match the model");
  }
  PromptSnapshot snap;
  snap.metadata = file.header.value("metadata", nlohmann::json::object());
  if (snap.metadata.contains("model_hash") && snap.metadata["model_hash"] != weights.content_hash()) {
    fail(ErrorKind::compatibility, path.string() + ": prompt was tuned against a different checkpoint");
  }
  snap.prompt = init_prompt(weights, n, 0);
  snap.prompt.perturbation = from_named(file.get("perturbation"), n, d, path.string());
  snap.prompt.adam_m = from_named(file.get("adam_m"), n, d, path.string());
  snap.prompt.adam_v = from_named(file.get("adam_v"), n, d, path.string());
  snap.prompt.step_count = file.header.value("step", std::int64_t{0});
  return snap;
}

}  // namespace pbl
