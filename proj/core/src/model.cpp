#include <cmath>
#include <cstring>

#include "pbl/error.hpp"
#include "pbl/model.hpp"
#include "pbl/sha256.hpp"
#include "flush_denormals.hpp"

namespace pbl {

namespace {

constexpr const char* kCheckpointFormat = "pbl-checkpoint";
constexpr int kCheckpointVersion = 1;

template <typename Dense>
std::vector<std::int64_t> shape_of(const Dense& m) {
  if constexpr (Dense::RowsAtCompileTime == 1) {
    return {static_cast<std::int64_t>(m.cols())};
  } else {
    return {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) fail(ErrorKind::config, std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive(vocab_size, "vocab_size");
  positive(embed_dim, "embed_dim");
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  positive(max_seq_len, "max_seq_len");
  positive(ff_multiplier, "ff_multiplier");
  if (embed_dim % num_heads != 0) {
    fail(ErrorKind::config, "embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                                std::to_string(num_heads));
  }
  if (vocab_size < kReservedTokens) {
    fail(ErrorKind::config, "vocab_size must cover the " + std::to_string(kReservedTokens) + " reserved tokens");
  }
}

std::int64_t ModelConfig::parameter_count() const {
  const std::int64_t d = embed_dim;
  const std::int64_t f = ff_dim();
  const std::int64_t per_layer = 4 * d + 4 * d * d + d * f + f + f * d + d;
  return static_cast<std::int64_t>(vocab_size) * d + static_cast<std::int64_t>(max_seq_len) * d +
         num_layers * per_layer + 2 * d;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"embed_dim", embed_dim},     {"num_layers", num_layers},
          {"num_heads", num_heads},   {"max_seq_len", max_seq_len}, {"ff_multiplier", ff_multiplier}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.ff_multiplier = j.at("ff_multiplier").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("model config: ") + e.what());
  }
  return c;
}

template <typename T>
Parameters<T> Parameters<T>::zeros(const ModelConfig& config) {
  const int d = config.embed_dim;
  const int f = config.ff_dim();
  Parameters<T> p;
  p.token_embedding = Matrix<T>::Zero(config.vocab_size, d);
  p.pos_embedding = Matrix<T>::Zero(config.max_seq_len, d);
  p.layers.resize(static_cast<std::size_t>(config.num_layers));
  for (auto& l : p.layers) {
    l.ln1_scale = RowVector<T>::Zero(d);
    l.ln1_shift = RowVector<T>::Zero(d);
    l.wq = Matrix<T>::Zero(d, d);
    l.wk = Matrix<T>::Zero(d, d);
    l.wv = Matrix<T>::Zero(d, d);
    l.wo = Matrix<T>::Zero(d, d);
    l.ln2_scale = RowVector<T>::Zero(d);
    l.ln2_shift = RowVector<T>::Zero(d);
    l.w1 = Matrix<T>::Zero(d, f);
    l.b1 = RowVector<T>::Zero(f);
    l.w2 = Matrix<T>::Zero(f, d);
    l.b2 = RowVector<T>::Zero(d);
  }
  p.final_scale = RowVector<T>::Zero(d);
  p.final_shift = RowVector<T>::Zero(d);
  return p;
}

template struct Parameters<float>;
template struct Parameters<double>;

std::vector<NamedTensor> to_named_tensors(const Parameters<float>& params) {
  std::vector<NamedTensor> out;
  params.visit([&](const std::string& name, const auto& m) {
    NamedTensor t;
    t.name = name;
    t.shape = shape_of(m);
    t.data.assign(m.data(), m.data() + m.size());
    out.push_back(std::move(t));
  });
  return out;
}

ModelWeights::ModelWeights(ModelConfig config, Parameters<float> params, nlohmann::json metadata)
    : config_(config), params_(std::move(params)), metadata_(std::move(metadata)) {
  config_.validate();
  params_.visit([&](const std::string& name, const auto& m) {
    if (!m.allFinite()) fail(ErrorKind::integrity, "tensor '" + name + "' contains non-finite values");
  });
  hash_ = compute_hash();
}

std::string ModelWeights::compute_hash() const { return sha256_hex(encode_payload(to_named_tensors(params_))); }

std::string save_checkpoint(const ModelWeights& weights, const std::filesystem::path& path) {
  nlohmann::json header = {{"format", kCheckpointFormat},
                           {"version", kCheckpointVersion},
                           {"config", weights.config().to_json()},
                           {"metadata", weights.metadata()}};
  return write_tensor_file(path, header, to_named_tensors(weights.parameters()));
}

ModelWeights load_checkpoint(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  if (file.header.value("format", std::string()) != kCheckpointFormat) {
    fail(ErrorKind::format, path.string() + ": not a model checkpoint");
  }
  if (!file.header.contains("config")) fail(ErrorKind::format, path.string() + ": header lacks config");
  const ModelConfig config = ModelConfig::from_json(file.header["config"]);
  config.validate();

  Parameters<float> params = Parameters<float>::zeros(config);
  std::size_t index = 0;
  params.visit([&](const std::string& name, auto& m) {
    if (index >= file.tensors.size()) fail(ErrorKind::integrity, path.string() + ": missing tensor '" + name + "'");
    const NamedTensor& t = file.tensors[index++];
    if (t.name != name) {
      fail(ErrorKind::integrity, path.string() + ": expected tensor '" + name + "', found '" + t.name + "'");
    }
    if (t.shape != shape_of(m)) fail(ErrorKind::integrity, path.string() + ": shape mismatch for '" + name + "'");
    std::memcpy(m.data(), t.data.data(), t.data.size() * sizeof(float));
  });
  if (index != file.tensors.size()) fail(ErrorKind::integrity, path.string() + ": unexpected extra tensors");

  ModelWeights weights(config, std::move(params), file.header.value("metadata", nlohmann::json::object()));
  if (weights.content_hash() != file.payload_sha256) {
    fail(ErrorKind::integrity, path.string() + ": content hash mismatch after load");
  }
  return weights;
}

EmbeddedSequence embed_tokens(const ModelWeights& weights, std::span<const int> token_ids) {
  const auto& cfg = weights.config();
  EmbeddedSequence seq;
  seq.vectors.resize(static_cast<Eigen::Index>(token_ids.size()), cfg.embed_dim);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int id = token_ids[i];
    if (id < 0 || id >= cfg.vocab_size) {
      fail(ErrorKind::vocabulary, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                      std::to_string(cfg.vocab_size));
    }
    seq.vectors.row(static_cast<Eigen::Index>(i)) = weights.parameters().token_embedding.row(id);
  }
  seq.text_span = {0, static_cast<int>(token_ids.size())};
  return seq;
}

Matrix<float> forward(const ModelWeights& weights, const EmbeddedSequence& seq) {
  const detail::FlushDenormals ftz;
  const Transformer<float> model(weights.config(), weights.parameters());
  return model.logits(seq.vectors);
}

std::array<double, 3> label_log_probs(const ModelWeights& weights, const EmbeddedSequence& seq,
                                      const Verbalizers& verbalizers) {
  const detail::FlushDenormals ftz;
  const Transformer<float> model(weights.config(), weights.parameters());
  const auto lp = model.label_log_probs(seq.vectors, verbalizers);
  return {lp[0], lp[1], lp[2]};
}

Matrix<float> backward_to_embeddings(const ModelWeights& weights, const EmbeddedSequence& seq,
                                     const LabelLoss& loss) {
  const detail::FlushDenormals ftz;
  const Transformer<float> model(weights.config(), weights.parameters());
  Matrix<float> grad;
  model.label_loss(seq.vectors, loss, &grad);
  return grad;
}

}  // namespace pbl
