#pragma once

// Desk-scale causal decoder-only transformer.
//
// Pre-norm blocks (LayerNorm -> causal multi-head attention -> residual,
// LayerNorm -> GELU feed-forward -> residual), learned absolute positional
// embeddings and an output projection tied to the token embedding matrix.
// Weights are frozen once wrapped in ModelWeights; the only gradients the
// prompt-tuning path asks for are with respect to the input vectors.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbl/reserved_tokens.hpp"
#include "pbl/tensor.hpp"
#include "pbl/tensor_file.hpp"

namespace pbl {

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 128;
  int num_layers = 2;
  int num_heads = 4;
  int max_seq_len = 64;
  int ff_multiplier = 4;

  /// Throws a config error on any violated invariant.
  void validate() const;

  int head_dim() const { return embed_dim / num_heads; }
  int ff_dim() const { return ff_multiplier * embed_dim; }
  std::int64_t parameter_count() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct LayerParameters {
  RowVector<T> ln1_scale, ln1_shift;
  Matrix<T> wq, wk, wv, wo;  // embed_dim x embed_dim, applied as x * W
  RowVector<T> ln2_scale, ln2_shift;
  Matrix<T> w1;  // embed_dim x ff_dim
  RowVector<T> b1;
  Matrix<T> w2;  // ff_dim x embed_dim
  RowVector<T> b2;
};

template <typename T>
struct Parameters {
  Matrix<T> token_embedding;  // vocab_size x embed_dim, also the output projection
  Matrix<T> pos_embedding;    // max_seq_len x embed_dim
  std::vector<LayerParameters<T>> layers;
  RowVector<T> final_scale, final_shift;

  static Parameters zeros(const ModelConfig& config);

  /// Visits every tensor as (name, Eigen dense object) in checkpoint order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    out.token_embedding = token_embedding.template cast<U>();
    out.pos_embedding = pos_embedding.template cast<U>();
    out.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& s = layers[l];
      auto& d = out.layers[l];
      d.ln1_scale = s.ln1_scale.template cast<U>();
      d.ln1_shift = s.ln1_shift.template cast<U>();
      d.wq = s.wq.template cast<U>();
      d.wk = s.wk.template cast<U>();
      d.wv = s.wv.template cast<U>();
      d.wo = s.wo.template cast<U>();
      d.ln2_scale = s.ln2_scale.template cast<U>();
      d.ln2_shift = s.ln2_shift.template cast<U>();
      d.w1 = s.w1.template cast<U>();
      d.b1 = s.b1.template cast<U>();
      d.w2 = s.w2.template cast<U>();
      d.b2 = s.b2.template cast<U>();
    }
    out.final_scale = final_scale.template cast<U>();
    out.final_shift = final_shift.template cast<U>();
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("token_embedding"), self.token_embedding);
    f(std::string("pos_embedding"), self.pos_embedding);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& layer = self.layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      f(p + "ln1.scale", layer.ln1_scale);
      f(p + "ln1.shift", layer.ln1_shift);
      f(p + "attn.wq", layer.wq);
      f(p + "attn.wk", layer.wk);
      f(p + "attn.wv", layer.wv);
      f(p + "attn.wo", layer.wo);
      f(p + "ln2.scale", layer.ln2_scale);
      f(p + "ln2.shift", layer.ln2_shift);
      f(p + "ffn.w1", layer.w1);
      f(p + "ffn.b1", layer.b1);
      f(p + "ffn.w2", layer.w2);
      f(p + "ffn.b2", layer.b2);
    }
    f(std::string("final_ln.scale"), self.final_scale);
    f(std::string("final_ln.shift"), self.final_shift);
  }
};

/// Frozen model: configuration plus float32 parameters, with the content hash
/// recorded at construction. There is no mutable access to the parameters.
class ModelWeights {
 public:
  ModelWeights(ModelConfig config, Parameters<float> params, nlohmann::json metadata = nlohmann::json::object());

  const ModelConfig& config() const { return config_; }
  const Parameters<float>& parameters() const { return params_; }
  const nlohmann::json& metadata() const { return metadata_; }

  /// Hash recorded when the weights were built or loaded.
  const std::string& content_hash() const { return hash_; }
  /// Re-hashes the current parameter bytes.
  std::string compute_hash() const;

  std::int64_t parameter_count() const { return config_.parameter_count(); }

 private:
  ModelConfig config_;
  Parameters<float> params_;
  nlohmann::json metadata_;
  std::string hash_;
};

std::vector<NamedTensor> to_named_tensors(const Parameters<float>& params);

/// Writes the checkpoint; returns the payload SHA-256.
std::string save_checkpoint(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_checkpoint(const std::filesystem::path& path);

struct TokenSpan {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

/// Input vectors before positional embeddings are added. Prompt rows come
/// first; the forward pass adds pos_embedding[i] to row i.
struct EmbeddedSequence {
  Matrix<float> vectors;
  TokenSpan prompt_span;
  TokenSpan text_span;

  int length() const { return static_cast<int>(vectors.rows()); }
};

struct Verbalizers {
  std::array<int, 3> ids{kNegativeId, kNeutralId, kPositiveId};
};

struct LabelLoss {
  int target_class = 0;
  Verbalizers verbalizers{};
  double weight = 1.0;
};

template <typename T>
struct LayerCache {
  Matrix<T> input;
  Matrix<T> norm1;  // normalized, pre-affine
  ColVector<T> rstd1;
  Matrix<T> ln1_out;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> attn;  // per head, rows x rows, causal softmax
  Matrix<T> context;            // concatenated head outputs
  Matrix<T> mid;                // residual stream after attention
  Matrix<T> norm2;
  ColVector<T> rstd2;
  Matrix<T> ln2_out;
  Matrix<T> pre_act;
  Matrix<T> gelu_tanh;
  Matrix<T> act;
};

/// Activations retained by a forward pass for backpropagation.
template <typename T>
struct ForwardPass {
  std::vector<LayerCache<T>> layers;
  Matrix<T> final_input;
  Matrix<T> final_norm;     // normalized (pre-affine) final activations
  ColVector<T> final_rstd;  // reciprocal std per row
  Matrix<T> hidden;         // final LayerNorm output
};

/// Forward and backward passes in precision T over a parameter set it does not own.
/// T = float is the normal execution mode; T = double exists for gradient checks.
template <typename T>
class Transformer {
 public:
  Transformer(const ModelConfig& config, const Parameters<T>& params);

  const ModelConfig& config() const { return config_; }

  /// Runs all blocks and the final LayerNorm over the rows of `inputs`.
  ForwardPass<T> run(const Matrix<T>& inputs) const;

  /// Logits (rows x vocab) for every position.
  Matrix<T> logits(const Matrix<T>& inputs) const;

  /// Log-softmax over the vocabulary at the final position, read at the verbalizer ids.
  std::array<T, 3> label_log_probs(const Matrix<T>& inputs, const Verbalizers& verbalizers) const;

  /// Cross-entropy of the target verbalizer at the final position. When `grad` is
  /// non-null it receives d loss / d inputs (same shape as inputs).
  T label_loss(const Matrix<T>& inputs, const LabelLoss& loss, Matrix<T>* grad) const;

  /// Backpropagates d loss / d hidden (final LayerNorm output) to the inputs.
  /// Weight gradients are accumulated into `weight_grads` when it is non-null.
  Matrix<T> backward(const ForwardPass<T>& pass, const Matrix<T>& d_hidden, Parameters<T>* weight_grads) const;

 private:
  const ModelConfig& config_;
  const Parameters<T>& params_;
};

/// Row i is token_embedding[token_ids[i]]; positional vectors are not included.
EmbeddedSequence embed_tokens(const ModelWeights& weights, std::span<const int> token_ids);

Matrix<float> forward(const ModelWeights& weights, const EmbeddedSequence& seq);

std::array<double, 3> label_log_probs(const ModelWeights& weights, const EmbeddedSequence& seq,
                                      const Verbalizers& verbalizers = {});

Matrix<float> backward_to_embeddings(const ModelWeights& weights, const EmbeddedSequence& seq,
                                     const LabelLoss& loss);

struct PretrainOptions {
  int steps = 2000;
  std::uint64_t seed = 0;
  int batch_size = 16;
  double learning_rate = 3e-3;
  double init_scale = 0.02;
};

/// Seeded random initialization: N(0, init_scale) matrices, unit LayerNorm
/// scales, zero shifts and biases.
Parameters<float> init_parameters(const ModelConfig& config, std::uint64_t seed, double init_scale = 0.02);

/// Next-token cross-entropy pretraining with Adam. Each corpus sequence is
/// prefixed with BOS and truncated to max_seq_len. Deterministic given the seed.
ModelWeights pretrain_lm(const ModelConfig& config, const std::vector<std::vector<int>>& corpus,
                         const PretrainOptions& options);

/// Summed next-token cross-entropy of `seq` (already BOS-prefixed). When
/// `grads` is non-null, gradients of grad_scale * loss are accumulated into it.
template <typename T>
double next_token_loss(const ModelConfig& config, const Parameters<T>& params, std::span<const int> seq,
                       Parameters<T>* grads, T grad_scale = T(1));

/// Mean next-token cross-entropy over the corpus (BOS-prefixed, truncated).
double mean_lm_loss(const ModelWeights& weights, const std::vector<std::vector<int>>& corpus);

}  // namespace pbl
