#include <cmath>

#include "pbl/error.hpp"
#include "pbl/model.hpp"

namespace pbl {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
void layer_norm(const Matrix<T>& x, const RowVector<T>& scale, const RowVector<T>& shift, Matrix<T>& norm,
                ColVector<T>& rstd, Matrix<T>& out) {
  const ColVector<T> mean = x.rowwise().mean();
  norm = x.colwise() - mean;
  const ColVector<T> var = norm.array().square().rowwise().mean();
  rstd = (var.array() + T(kLayerNormEps)).rsqrt();
  norm = norm.array().colwise() * rstd.array();
  out = (norm.array().rowwise() * scale.array()).rowwise() + shift.array();
}

// Returns d loss / d x given d loss / d (layer norm output).
template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& d_out, const Matrix<T>& norm, const ColVector<T>& rstd,
                              const RowVector<T>& scale, RowVector<T>* d_scale, RowVector<T>* d_shift) {
  if (d_scale != nullptr) {
    *d_scale += (d_out.array() * norm.array()).colwise().sum().matrix();
    *d_shift += d_out.colwise().sum();
  }
  const Matrix<T> d_norm = d_out.array().rowwise() * scale.array();
  const ColVector<T> mean_d = d_norm.rowwise().mean();
  const ColVector<T> mean_dn = (d_norm.array() * norm.array()).rowwise().mean();
  Matrix<T> dx = d_norm.colwise() - mean_d;
  dx.array() -= norm.array().colwise() * mean_dn.array();
  dx.array().colwise() *= rstd.array();
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluK = 0.044715;

// tanh approximation of GELU; `t` keeps tanh(c * (u + k u^3)) for the backward pass.
template <typename T>
void gelu(const Matrix<T>& u, Matrix<T>& t, Matrix<T>& out) {
  const auto a = u.array();
  t = (T(kGeluC) * (a + T(kGeluK) * a.cube())).tanh().matrix();
  out = (T(0.5) * a * (T(1) + t.array())).matrix();
}

template <typename T>
Matrix<T> gelu_grad(const Matrix<T>& u, const Matrix<T>& t) {
  const auto a = u.array();
  const auto th = t.array();
  return (T(0.5) * (T(1) + th) +
          T(0.5) * a * (T(1) - th.square()) * T(kGeluC) * (T(1) + T(3 * kGeluK) * a.square()))
      .matrix();
}

template <typename T>
void require_finite(const Matrix<T>& m, const char* stage, int layer) {
  if (!m.allFinite()) {
    fail(ErrorKind::numerical, std::string("non-finite values in ") + stage + " at layer " + std::to_string(layer));
  }
}

template <typename T>
RowVector<T> log_softmax(const RowVector<T>& logits) {
  const T mx = logits.maxCoeff();
  const T lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

}  // namespace

template <typename T>
Transformer<T>::Transformer(const ModelConfig& config, const Parameters<T>& params) : config_(config), params_(params) {}

template <typename T>
ForwardPass<T> Transformer<T>::run(const Matrix<T>& inputs) const {
  const auto rows = inputs.rows();
  const int d = config_.embed_dim;
  const int heads = config_.num_heads;
  const int hd = config_.head_dim();
  if (rows > config_.max_seq_len) {
    fail(ErrorKind::capacity,
         "sequence length " + std::to_string(rows) + " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  }
  if (inputs.cols() != d) {
    fail(ErrorKind::capacity, "input width " + std::to_string(inputs.cols()) + " != embed_dim " + std::to_string(d));
  }

  ForwardPass<T> pass;
  pass.layers.resize(params_.layers.size());
  Matrix<T> x = inputs + params_.pos_embedding.topRows(rows);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    const auto& p = params_.layers[l];
    auto& c = pass.layers[l];
    c.input = x;
    layer_norm(x, p.ln1_scale, p.ln1_shift, c.norm1, c.rstd1, c.ln1_out);
    c.q.noalias() = c.ln1_out * p.wq;
    c.k.noalias() = c.ln1_out * p.wk;
    c.v.noalias() = c.ln1_out * p.wv;
    c.context.resize(rows, d);
    c.attn.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      auto& a = c.attn[static_cast<std::size_t>(h)];
      a.noalias() = c.q.middleCols(h * hd, hd) * c.k.middleCols(h * hd, hd).transpose();
      for (Eigen::Index i = 0; i < rows; ++i) {
        auto row = a.row(i);
        const T mx = row.head(i + 1).maxCoeff() * scale;
        T sum = 0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          row(j) = std::exp(row(j) * scale - mx);
          sum += row(j);
        }
        row.head(i + 1) /= sum;
        row.tail(rows - i - 1).setZero();
      }
      c.context.middleCols(h * hd, hd).noalias() = a * c.v.middleCols(h * hd, hd);
    }
    c.mid = x;
    c.mid.noalias() += c.context * p.wo;
    layer_norm(c.mid, p.ln2_scale, p.ln2_shift, c.norm2, c.rstd2, c.ln2_out);
    c.pre_act.noalias() = c.ln2_out * p.w1;
    c.pre_act.rowwise() += p.b1;
    gelu(c.pre_act, c.gelu_tanh, c.act);
    x = c.mid;
    x.noalias() += c.act * p.w2;
    x.rowwise() += p.b2;
    require_finite(x, "forward activations", static_cast<int>(l));
  }
  pass.final_input = x;
  layer_norm(x, params_.final_scale, params_.final_shift, pass.final_norm, pass.final_rstd, pass.hidden);
  return pass;
}

template <typename T>
Matrix<T> Transformer<T>::logits(const Matrix<T>& inputs) const {
  const auto pass = run(inputs);
  Matrix<T> out = pass.hidden * params_.token_embedding.transpose();
  return out;
}

template <typename T>
std::array<T, 3> Transformer<T>::label_log_probs(const Matrix<T>& inputs, const Verbalizers& verbalizers) const {
  if (inputs.rows() == 0) fail(ErrorKind::data, "label scoring needs a non-empty sequence");
  for (int id : verbalizers.ids) {
    if (id < 0 || id >= config_.vocab_size) fail(ErrorKind::vocabulary, "verbalizer id out of range");
  }
  const auto pass = run(inputs);
  const RowVector<T> last = pass.hidden.row(pass.hidden.rows() - 1) * params_.token_embedding.transpose();
  const RowVector<T> lp = log_softmax(last);
  return {lp(verbalizers.ids[0]), lp(verbalizers.ids[1]), lp(verbalizers.ids[2])};
}

template <typename T>
T Transformer<T>::label_loss(const Matrix<T>& inputs, const LabelLoss& loss, Matrix<T>* grad) const {
  if (inputs.rows() == 0) fail(ErrorKind::data, "label loss needs a non-empty sequence");
  if (loss.target_class < 0 || loss.target_class > 2) fail(ErrorKind::label, "target class out of range");
  for (int id : loss.verbalizers.ids) {
    if (id < 0 || id >= config_.vocab_size) fail(ErrorKind::vocabulary, "verbalizer id out of range");
  }
  const auto pass = run(inputs);
  const auto last = pass.hidden.rows() - 1;
  const RowVector<T> logits_last = pass.hidden.row(last) * params_.token_embedding.transpose();
  const RowVector<T> lp = log_softmax(logits_last);
  const int target = loss.verbalizers.ids[static_cast<std::size_t>(loss.target_class)];
  const T w = static_cast<T>(loss.weight);
  const T value = -w * lp(target);
  if (!std::isfinite(static_cast<double>(value))) fail(ErrorKind::numerical, "non-finite label loss");

  if (grad != nullptr) {
    RowVector<T> d_logits = lp.array().exp().matrix() * w;
    d_logits(target) -= w;
    Matrix<T> d_hidden = Matrix<T>::Zero(pass.hidden.rows(), pass.hidden.cols());
    d_hidden.row(last).noalias() = d_logits * params_.token_embedding;
    *grad = backward(pass, d_hidden, nullptr);
  }
  return value;
}

template <typename T>
Matrix<T> Transformer<T>::backward(const ForwardPass<T>& pass, const Matrix<T>& d_hidden,
                                   Parameters<T>* weight_grads) const {
  const int heads = config_.num_heads;
  const int hd = config_.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const auto rows = d_hidden.rows();
  const bool want_w = weight_grads != nullptr;

  Matrix<T> dx = layer_norm_backward<T>(d_hidden, pass.final_norm, pass.final_rstd, params_.final_scale,
                                        want_w ? &weight_grads->final_scale : nullptr,
                                        want_w ? &weight_grads->final_shift : nullptr);

  for (int l = static_cast<int>(params_.layers.size()) - 1; l >= 0; --l) {
    const auto& p = params_.layers[static_cast<std::size_t>(l)];
    const auto& c = pass.layers[static_cast<std::size_t>(l)];
    LayerParameters<T>* g = want_w ? &weight_grads->layers[static_cast<std::size_t>(l)] : nullptr;

    // Feed-forward branch; dx is d loss / d (block output) and flows to mid unchanged.
    Matrix<T> d_pre = dx * p.w2.transpose();
    if (g != nullptr) {
      g->w2.noalias() += c.act.transpose() * dx;
      g->b2 += dx.colwise().sum();
    }
    d_pre.array() *= gelu_grad(c.pre_act, c.gelu_tanh).array();
    if (g != nullptr) {
      g->w1.noalias() += c.ln2_out.transpose() * d_pre;
      g->b1 += d_pre.colwise().sum();
    }
    const Matrix<T> d_ln2 = d_pre * p.w1.transpose();
    dx += layer_norm_backward<T>(d_ln2, c.norm2, c.rstd2, p.ln2_scale, g ? &g->ln2_scale : nullptr,
                                 g ? &g->ln2_shift : nullptr);

    // Attention branch.
    const Matrix<T> d_context = dx * p.wo.transpose();
    if (g != nullptr) g->wo.noalias() += c.context.transpose() * dx;
    Matrix<T> dq(rows, config_.embed_dim), dk(rows, config_.embed_dim), dv(rows, config_.embed_dim);
    for (int h = 0; h < heads; ++h) {
      const auto& a = c.attn[static_cast<std::size_t>(h)];
      const auto dctx = d_context.middleCols(h * hd, hd);
      Matrix<T> da = dctx * c.v.middleCols(h * hd, hd).transpose();
      dv.middleCols(h * hd, hd).noalias() = a.transpose() * dctx;
      const ColVector<T> dot = (da.array() * a.array()).rowwise().sum();
      Matrix<T> ds = (a.array() * (da.colwise() - dot).array()) * scale;
      dq.middleCols(h * hd, hd).noalias() = ds * c.k.middleCols(h * hd, hd);
      dk.middleCols(h * hd, hd).noalias() = ds.transpose() * c.q.middleCols(h * hd, hd);
    }
    Matrix<T> d_ln1 = dq * p.wq.transpose();
    d_ln1.noalias() += dk * p.wk.transpose();
    d_ln1.noalias() += dv * p.wv.transpose();
    if (g != nullptr) {
      g->wq.noalias() += c.ln1_out.transpose() * dq;
      g->wk.noalias() += c.ln1_out.transpose() * dk;
      g->wv.noalias() += c.ln1_out.transpose() * dv;
    }
    dx += layer_norm_backward<T>(d_ln1, c.norm1, c.rstd1, p.ln1_scale, g ? &g->ln1_scale : nullptr,
                                 g ? &g->ln1_shift : nullptr);
    require_finite(dx, "gradient", l);
  }
  if (want_w) weight_grads->pos_embedding.topRows(rows) += dx;
  return dx;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace pbl
