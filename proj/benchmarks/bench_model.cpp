#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "pbl/model.hpp"
#include "pbl/prompt_tuner.hpp"
#include "pbl/reserved_tokens.hpp"

namespace {

using namespace pbl;

// Toy shape: 2 layers, d=128, 4 heads, 64 positions.
const ModelWeights& toy_weights() {
  static const ModelWeights weights = [] {
    ModelConfig config;
    config.vocab_size = 128;
    return ModelWeights(config, init_parameters(config, 1, 0.02));
  }();
  return weights;
}

std::vector<int> random_tokens(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> token(kReservedTokens, toy_weights().config().vocab_size - 1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& t : out) t = token(rng);
  return out;
}

void BM_Forward(benchmark::State& state) {
  const auto seq = embed_tokens(toy_weights(), random_tokens(static_cast<int>(state.range(0)), 2));
  for (auto _ : state) benchmark::DoNotOptimize(forward(toy_weights(), seq));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_BackwardToEmbeddings(benchmark::State& state) {
  const auto seq = embed_tokens(toy_weights(), random_tokens(static_cast<int>(state.range(0)), 3));
  LabelLoss loss;
  loss.target_class = 2;
  for (auto _ : state) benchmark::DoNotOptimize(backward_to_embeddings(toy_weights(), seq, loss));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BackwardToEmbeddings)->Arg(8)->Arg(16)->Arg(32);

// One Adam step on a batch of 32 with an 8-token prompt and 10-token inputs.
void BM_TrainingStep(benchmark::State& state) {
  std::vector<LabeledExample> batch(32);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i].token_ids = random_tokens(10, 10 + i);
    batch[i].label = static_cast<Sentiment>(i % 3);
  }
  TuningConfig config;
  config.learning_rate = 0.01;
  PromptState prompt = init_prompt(toy_weights(), config.n_prompt_tokens, 0);
  for (auto _ : state) benchmark::DoNotOptimize(training_step(prompt, toy_weights(), batch, config));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
