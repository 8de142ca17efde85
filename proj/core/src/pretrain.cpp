#include <cmath>
#include <random>

#include "pbl/adam.hpp"
#include "pbl/error.hpp"
#include "pbl/model.hpp"
#include "flush_denormals.hpp"

namespace pbl {

namespace {

std::vector<int> lm_sequence(const std::vector<int>& tokens, int max_len) {
  std::vector<int> seq;
  seq.reserve(tokens.size() + 1);
  seq.push_back(kBosId);
  for (int t : tokens) {
    if (static_cast<int>(seq.size()) >= max_len) break;
    seq.push_back(t);
  }
  return seq;
}

// One span per tensor, in visit order.
std::vector<std::span<float>> tensor_spans(Parameters<float>& p) {
  std::vector<std::span<float>> out;
  p.visit([&](const std::string&, auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

}  // namespace

template <typename T>
double next_token_loss(const ModelConfig& config, const Parameters<T>& params, std::span<const int> seq,
                       Parameters<T>* grads, T grad_scale) {
  const int n = static_cast<int>(seq.size()) - 1;
  if (n <= 0) return 0.0;
  for (int t : seq) {
    if (t < 0 || t >= config.vocab_size) fail(ErrorKind::vocabulary, "corpus token id out of range");
  }
  Matrix<T> inputs(n, config.embed_dim);
  for (int i = 0; i < n; ++i) inputs.row(i) = params.token_embedding.row(seq[static_cast<std::size_t>(i)]);

  const Transformer<T> model(config, params);
  const auto pass = model.run(inputs);
  Matrix<T> logits = pass.hidden * params.token_embedding.transpose();

  double loss = 0.0;
  Matrix<T>& d_logits = logits;  // reuse storage
  for (int i = 0; i < n; ++i) {
    auto row = d_logits.row(i);
    const T mx = row.maxCoeff();
    row.array() = (row.array() - mx).exp();
    const T sum = row.sum();
    row /= sum;
    const int target = seq[static_cast<std::size_t>(i) + 1];
    loss -= std::log(static_cast<double>(row(target)));
    row(target) -= T(1);
  }
  if (grads != nullptr) {
    d_logits *= grad_scale;
    grads->token_embedding.noalias() += d_logits.transpose() * pass.hidden;
    const Matrix<T> d_hidden = d_logits * params.token_embedding;
    const Matrix<T> d_inputs = model.backward(pass, d_hidden, grads);
    for (int i = 0; i < n; ++i) grads->token_embedding.row(seq[static_cast<std::size_t>(i)]) += d_inputs.row(i);
  }
  return loss;
}

template double next_token_loss<float>(const ModelConfig&, const Parameters<float>&, std::span<const int>,
                                       Parameters<float>*, float);
template double next_token_loss<double>(const ModelConfig&, const Parameters<double>&, std::span<const int>,
                                        Parameters<double>*, double);

Parameters<float> init_parameters(const ModelConfig& config, std::uint64_t seed, double init_scale) {
  config.validate();
  Parameters<float> p = Parameters<float>::zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, static_cast<float>(init_scale));
  p.visit([&](const std::string& name, auto& m) {
    const bool is_scale = name.ends_with(".scale");
    const bool is_shift_or_bias = name.ends_with(".shift") || name.ends_with(".b1") || name.ends_with(".b2");
    if (is_scale) {
      m.setOnes();
    } else if (!is_shift_or_bias) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    }
  });
  return p;
}

ModelWeights pretrain_lm(const ModelConfig& config, const std::vector<std::vector<int>>& corpus,
                         const PretrainOptions& options) {
  const detail::FlushDenormals ftz;
  config.validate();
  if (corpus.empty()) fail(ErrorKind::data, "pretraining corpus is empty");
  bool any_pair = false;
  for (const auto& s : corpus) any_pair = any_pair || !s.empty();
  if (!any_pair) fail(ErrorKind::data, "pretraining corpus has no tokens");
  if (options.steps < 0 || options.batch_size <= 0 || options.learning_rate <= 0) {
    fail(ErrorKind::config, "pretraining needs steps >= 0, batch_size > 0 and learning_rate > 0");
  }

  Parameters<float> params = init_parameters(config, options.seed, options.init_scale);
  if (options.steps == 0) {
    return ModelWeights(config, std::move(params), {{"pretrain_steps", 0}, {"seed", options.seed}});
  }

  Parameters<float> m = Parameters<float>::zeros(config);
  Parameters<float> v = Parameters<float>::zeros(config);
  Parameters<float> grads = Parameters<float>::zeros(config);
  AdamConfig adam;
  adam.learning_rate = options.learning_rate;

  std::mt19937_64 rng(options.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);

  for (int step = 1; step <= options.steps; ++step) {
    grads.visit([](const std::string&, auto& g) { g.setZero(); });
    std::vector<std::vector<int>> batch;
    int positions = 0;
    for (int b = 0; b < options.batch_size; ++b) {
      batch.push_back(lm_sequence(corpus[pick(rng)], config.max_seq_len));
      positions += static_cast<int>(batch.back().size()) - 1;
    }
    if (positions == 0) continue;
    const float scale = 1.0f / static_cast<float>(positions);
    for (const auto& seq : batch) next_token_loss<float>(config, params, seq, &grads, scale);

    const auto p_views = tensor_spans(params);
    const auto g_views = tensor_spans(grads);
    const auto m_views = tensor_spans(m);
    const auto v_views = tensor_spans(v);
    for (std::size_t k = 0; k < p_views.size(); ++k) {
      adam_update<float>(p_views[k], g_views[k], m_views[k], v_views[k], step, adam);
    }
  }
  return ModelWeights(config, std::move(params),
                      {{"pretrain_steps", options.steps}, {"seed", options.seed}});
}

double mean_lm_loss(const ModelWeights& weights, const std::vector<std::vector<int>>& corpus) {
  const detail::FlushDenormals ftz;
  double total = 0.0;
  long count = 0;
  for (const auto& tokens : corpus) {
    const auto seq = lm_sequence(tokens, weights.config().max_seq_len);
    total += next_token_loss<float>(weights.config(), weights.parameters(), seq, nullptr, 1.0f);
    count += static_cast<long>(seq.size()) - 1;
  }
  if (count == 0) fail(ErrorKind::data, "corpus has no predictable positions");
  return total / static_cast<double>(count);
}

}  // namespace pbl
