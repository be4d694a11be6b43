#include "model/session.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "common/errors.hpp"

namespace ehrgen {

namespace {

using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> as_mat(const ad::Tensor& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols)};
}
Eigen::Map<const RowVec> as_row(const ad::Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.size())}; }

// Same arithmetic as the graph layer_norm so both paths agree to rounding.
RowVec layer_norm(const RowVec& x, const ad::Tensor& g, const ad::Tensor& b) {
  const double d = static_cast<double>(x.size());
  double mu = 0.0;
  for (Eigen::Index c = 0; c < x.size(); ++c) mu += x[c];
  mu /= d;
  double var = 0.0;
  for (Eigen::Index c = 0; c < x.size(); ++c) var += (x[c] - mu) * (x[c] - mu);
  var /= d;
  const double rs = 1.0 / std::sqrt(var + 1e-5);
  RowVec out(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) out[c] = (x[c] - mu) * rs * g.data[c] + b.data[c];
  return out;
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;
  constexpr double k = 0.044715;
  return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x)));
}

}  // namespace

InferenceSession::InferenceSession(const Model& model) : model_(&model) {
  const auto& cfg = model.config();
  for (size_t l = 0; l < cfg.n_layers; ++l) {
    auto p = [&](const char* n) { return &model.param("block" + std::to_string(l) + "." + n).value; };
    layers_.push_back({p("ln1_g"), p("ln1_b"), p("w_qkv"), p("b_qkv"), p("w_o"), p("b_o"), p("ln2_g"), p("ln2_b"),
                       p("w_ff1"), p("b_ff1"), p("w_ff2"), p("b_ff2")});
  }
  emb_ = &model.param("tok_emb").value;
  lnf_g_ = &model.param("lnf_g").value;
  lnf_b_ = &model.param("lnf_b").value;
  keys_.resize(cfg.n_layers);
  values_.resize(cfg.n_layers);
}

void InferenceSession::feed(TokenId token) {
  const auto& cfg = model_->config();
  if (length_ >= cfg.context_window)
    throw ValidationError("inference: context window of " + std::to_string(cfg.context_window) + " exhausted");
  if (token < 0 || static_cast<size_t>(token) >= emb_->rows)
    throw ValidationError("inference: token id " + std::to_string(token) + " out of range");
  const Eigen::Index d = static_cast<Eigen::Index>(cfg.embed_dim);
  const size_t heads = cfg.n_heads, hd = cfg.embed_dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  const size_t n = length_ + 1;

  RowVec x = Eigen::Map<const RowVec>(emb_->data.data() + static_cast<size_t>(token) * emb_->cols, d);
  std::vector<double> scores(n);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    RowVec h = layer_norm(x, *L.ln1_g, *L.ln1_b);
    RowVec qkv = h * as_mat(*L.w_qkv) + as_row(*L.b_qkv);
    auto& K = keys_[l];
    auto& V = values_[l];
    K.insert(K.end(), qkv.data() + d, qkv.data() + 2 * d);
    V.insert(V.end(), qkv.data() + 2 * d, qkv.data() + 3 * d);
    RowVec att = RowVec::Zero(d);
    for (size_t hh = 0; hh < heads; ++hh) {
      const double* q = qkv.data() + hh * hd;
      double mx = -INFINITY;
      for (size_t j = 0; j < n; ++j) {
        const double* k = K.data() + j * cfg.embed_dim + hh * hd;
        double s = 0.0;
        for (size_t c = 0; c < hd; ++c) s += q[c] * k[c];
        scores[j] = s * inv_sqrt;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (size_t j = 0; j < n; ++j) z += (scores[j] = std::exp(scores[j] - mx));
      for (size_t j = 0; j < n; ++j) {
        const double w = scores[j] / z;
        const double* v = V.data() + j * cfg.embed_dim + hh * hd;
        for (size_t c = 0; c < hd; ++c) att[static_cast<Eigen::Index>(hh * hd + c)] += w * v[c];
      }
    }
    x += att * as_mat(*L.w_o) + as_row(*L.b_o);
    h = layer_norm(x, *L.ln2_g, *L.ln2_b);
    RowVec f = h * as_mat(*L.w_ff1) + as_row(*L.b_ff1);
    for (Eigen::Index c = 0; c < f.size(); ++c) f[c] = gelu(f[c]);
    x += f * as_mat(*L.w_ff2) + as_row(*L.b_ff2);
  }
  RowVec out = layer_norm(x, *lnf_g_, *lnf_b_);
  hidden_.assign(out.data(), out.data() + d);
  length_ = n;
}

void InferenceSession::logits(std::vector<double>& out) const {
  if (length_ == 0) throw ValidationError("inference: no tokens fed");
  out.resize(emb_->rows);
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())).noalias() =
      as_mat(*emb_) * Eigen::Map<const Eigen::VectorXd>(hidden_.data(), static_cast<Eigen::Index>(hidden_.size()));
}

std::vector<double> InferenceSession::logits() const {
  std::vector<double> out;
  logits(out);
  return out;
}

}  // namespace ehrgen
