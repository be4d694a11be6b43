#include "model/model.hpp"

#include <cmath>
#include <cstring>

#include "common/errors.hpp"
#include "common/hash.hpp"
#include "model/session.hpp"

namespace ehrgen {

namespace {

const char* const kBlockParams[] = {"ln1_g", "ln1_b", "w_qkv", "b_qkv", "w_o", "b_o",
                                    "ln2_g", "ln2_b", "w_ff1", "b_ff1", "w_ff2", "b_ff2"};
constexpr size_t kPerBlock = 12;

std::string block_name(size_t layer, const char* p) { return "block" + std::to_string(layer) + "." + p; }

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("model config: " + field + " " + why);
  };
  if (vocab_size == 0) fail("vocab_size", "must be positive");
  if (embed_dim == 0 || embed_dim % 3 != 0) fail("embed_dim", "must be a positive multiple of 3");
  if (n_heads == 0 || embed_dim % n_heads != 0) fail("n_heads", "must divide embed_dim");
  if (n_layers == 0) fail("n_layers", "must be positive");
  if (context_window == 0) fail("context_window", "must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) fail("dropout_rate", "must be in [0, 1)");
  if (max_td_year_class < 0) fail("max_td_year_class", "must be nonnegative");
}

std::vector<std::pair<std::string, std::pair<size_t, size_t>>> parameter_layout(const ModelConfig& cfg) {
  const size_t d = cfg.embed_dim, third = d / 3;
  std::vector<std::pair<std::string, std::pair<size_t, size_t>>> out;
  out.push_back({"tok_emb", {cfg.vocab_size, d}});
  for (size_t l = 0; l < cfg.n_layers; ++l) {
    const std::pair<size_t, size_t> shapes[kPerBlock] = {{1, d}, {1, d}, {d, 3 * d}, {1, 3 * d},
                                                          {d, d}, {1, d}, {1, d},     {1, d},
                                                          {d, 4 * d}, {1, 4 * d}, {4 * d, d}, {1, d}};
    for (size_t i = 0; i < kPerBlock; ++i) out.push_back({block_name(l, kBlockParams[i]), shapes[i]});
  }
  const size_t years = static_cast<size_t>(cfg.max_td_year_class) + 1;
  out.push_back({"lnf_g", {1, d}});
  out.push_back({"lnf_b", {1, d}});
  out.push_back({"td_year_w", {third, years}});
  out.push_back({"td_year_b", {1, years}});
  out.push_back({"td_month_w", {third, kTdMonthClasses}});
  out.push_back({"td_month_b", {1, kTdMonthClasses}});
  out.push_back({"td_day_w", {third, kTdDayClasses}});
  out.push_back({"td_day_b", {1, kTdDayClasses}});
  out.push_back({"tte_w", {d, 2}});
  out.push_back({"tte_b", {1, 2}});
  return out;
}

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_rng(seed, {0x6d6f64656c});
  std::normal_distribution<double> normal(0.0, 0.02);
  const double proj_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.n_layers));
  for (const auto& [name, shape] : parameter_layout(cfg_)) {
    ad::Tensor t(shape.first, shape.second);
    const bool gain = name.ends_with("_g");
    const bool bias = name.ends_with("_b") || name.find(".b_") != std::string::npos;
    if (gain) {
      t.fill(1.0);
    } else if (!bias) {
      const double s = (name.ends_with("w_o") || name.ends_with("w_ff2")) ? proj_scale : 1.0;
      for (double& v : t.data) v = s * normal(rng);
    }
    params_.emplace_back(name, std::move(t));
  }
}

Model::Model(const ModelConfig& cfg, std::vector<ad::Parameter> params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  auto layout = parameter_layout(cfg_);
  if (layout.size() != params_.size())
    throw ValidationError("model has " + std::to_string(params_.size()) + " tensors, config expects " +
                          std::to_string(layout.size()));
  for (size_t i = 0; i < layout.size(); ++i) {
    auto& p = params_[i];
    if (p.name != layout[i].first || p.value.rows != layout[i].second.first || p.value.cols != layout[i].second.second)
      throw ValidationError("parameter " + std::to_string(i) + " is " + p.name + p.value.shape_string() +
                            ", expected " + layout[i].first);
    if (!p.grad.same_shape(p.value)) p.grad = ad::Tensor(p.value.rows, p.value.cols);
  }
}

std::vector<ad::Parameter*> Model::parameter_ptrs() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

size_t Model::index(std::string_view name) const {
  for (size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ValidationError("no parameter named " + std::string(name));
}

ad::Parameter& Model::param(std::string_view name) { return params_[index(name)]; }
const ad::Parameter& Model::param(std::string_view name) const { return params_[index(name)]; }

size_t Model::parameter_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

uint64_t Model::weights_hash() const {
  uint64_t h = fnv1a64("");
  for (const auto& p : params_) {
    h = fnv1a64(p.name, h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p.value.data.data()), p.value.size() * sizeof(double)), h);
  }
  return h;
}

Model::Bound Model::bind(ad::Graph& g) {
  Bound b;
  b.vars.reserve(params_.size());
  for (auto& p : params_) b.vars.push_back(g.param(p));
  return b;
}

ad::Var Model::hidden(ad::Graph& g, const Bound& b, std::span<const TokenId> ids, const ad::Segments& segments,
                      Rng* dropout_rng) const {
  if (ids.empty()) throw ValidationError("forward: empty input");
  if (segments.total() != ids.size()) throw ValidationError("forward: segments do not cover the input");
  for (size_t len : segments.lengths)
    if (len > cfg_.context_window)
      throw ValidationError("forward: segment of " + std::to_string(len) + " tokens exceeds context window " +
                            std::to_string(cfg_.context_window));
  const double rate = dropout_rng ? cfg_.dropout_rate : 0.0;
  auto drop = [&](ad::Var v) { return rate > 0.0 ? ad::dropout(g, v, rate, *dropout_rng) : v; };
  const auto& v = b.vars;

  ad::Var x = drop(ad::embedding(g, v[0], ids));
  for (size_t l = 0; l < cfg_.n_layers; ++l) {
    const ad::Var* p = &v[1 + l * kPerBlock];
    ad::Var h = ad::layer_norm(g, x, p[0], p[1]);
    ad::Var qkv = ad::linear(g, h, p[2], p[3]);
    ad::Var att = ad::attention(g, qkv, segments, cfg_.n_heads, /*causal=*/true);
    x = ad::add(g, x, drop(ad::linear(g, att, p[4], p[5])));
    h = ad::layer_norm(g, x, p[6], p[7]);
    h = ad::gelu(g, ad::linear(g, h, p[8], p[9]));
    x = ad::add(g, x, drop(ad::linear(g, h, p[10], p[11])));
  }
  const size_t f = 1 + cfg_.n_layers * kPerBlock;
  return ad::layer_norm(g, x, v[f], v[f + 1]);
}

ad::Var Model::ntp_logits(ad::Graph& g, const Bound& b, ad::Var hidden) const {
  return ad::matmul_bt(g, hidden, b.vars[0]);
}

ad::Var Model::td_loss(ad::Graph& g, const Bound& b, ad::Var h_att, std::span<const int64_t> deltas,
                       size_t* clamped) const {
  const size_t f = 3 + cfg_.n_layers * kPerBlock;
  const size_t third = cfg_.embed_dim / 3;
  std::vector<int32_t> years, months, days;
  for (int64_t d : deltas) {
    TimeTriple t = decompose_interval(d);
    if (t.years > cfg_.max_td_year_class) {
      t.years = cfg_.max_td_year_class;
      if (clamped) ++*clamped;
    }
    years.push_back(static_cast<int32_t>(t.years));
    months.push_back(static_cast<int32_t>(t.months));
    days.push_back(static_cast<int32_t>(t.days));
  }
  const auto& v = b.vars;
  ad::Var ly = ad::linear(g, ad::slice_cols(g, h_att, 0, third), v[f], v[f + 1]);
  ad::Var lm = ad::linear(g, ad::slice_cols(g, h_att, third, third), v[f + 2], v[f + 3]);
  ad::Var ld = ad::linear(g, ad::slice_cols(g, h_att, 2 * third, third), v[f + 4], v[f + 5]);
  ad::Var loss = ad::cross_entropy_sum(g, ly, years);
  loss = ad::add(g, loss, ad::cross_entropy_sum(g, lm, months));
  return ad::add(g, loss, ad::cross_entropy_sum(g, ld, days));
}

ad::Var Model::tte_params(ad::Graph& g, const Bound& b, ad::Var h_att) const {
  const size_t f = 9 + cfg_.n_layers * kPerBlock;
  return ad::add_scalar(g, ad::softplus(g, ad::linear(g, h_att, b.vars[f], b.vars[f + 1])), kPositiveFloor);
}

ad::Var Model::tte_loss(ad::Graph& g, const Bound& b, ad::Var h_att, std::span<const int64_t> deltas) const {
  ad::Var ab = tte_params(g, b, h_att);
  std::vector<double> t;
  for (int64_t d : deltas) {
    if (d < 0) throw ValidationError("tte: negative interval");
    t.push_back(static_cast<double>(d) + kTteOffsetDays);
  }
  ad::Var lp = ad::gamma_log_pdf(g, ad::slice_cols(g, ab, 0, 1), ad::slice_cols(g, ab, 1, 1), t);
  return ad::scale(g, ad::sum(g, lp), -1.0);
}

Model::LossResult Model::total_loss(ad::Graph& g, const Bound& b, const Batch& batch, Rng* dropout_rng) const {
  if (batch.ids.empty()) throw ValidationError("total_loss: batch has no tokens");
  if (batch.ntp_targets.size() != batch.ids.size())
    throw ValidationError("total_loss: one next-token target per position required");
  LossResult r;
  r.parts.tokens = batch.ids.size();
  for (int32_t t : batch.ntp_targets) r.parts.ntp_targets += t >= 0;

  ad::Var h = hidden(g, b, batch.ids, batch.segments, dropout_rng);
  ad::Var ntp = ad::cross_entropy_sum(g, ntp_logits(g, b, h), batch.ntp_targets);
  ad::Var total = ntp;
  const double inv = 1.0 / static_cast<double>(r.parts.tokens);
  r.parts.ntp_sum = g.value(ntp).item();
  r.parts.ntp = r.parts.ntp_sum * inv;
  if (!batch.att.empty()) {
    std::vector<size_t> rows;
    std::vector<int64_t> deltas;
    for (const auto& a : batch.att) {
      rows.push_back(a.position);
      deltas.push_back(a.delta_days);
    }
    ad::Var h_att = ad::gather_rows(g, h, rows);
    ad::Var td = td_loss(g, b, h_att, deltas, &r.parts.clamped_years);
    ad::Var tte = tte_loss(g, b, h_att, deltas);
    r.parts.td = g.value(td).item() * inv;
    r.parts.tte = g.value(tte).item() * inv;
    r.parts.att_positions = rows.size();
    total = ad::add(g, ad::add(g, total, td), tte);
  }
  r.total = ad::scale(g, total, inv);
  r.parts.total = g.value(r.total).item();
  return r;
}

void append_segment(Batch& batch, const Vocabulary& vocab, std::span<const TokenId> ids,
                    std::span<const int64_t> att_days) {
  if (ids.empty()) throw ValidationError("append_segment: empty sequence");
  const size_t base = batch.ids.size();
  for (size_t i = 0; i < ids.size(); ++i) {
    batch.ids.push_back(ids[i]);
    batch.ntp_targets.push_back(i + 1 < ids.size() ? ids[i + 1] : -1);
    const TokenClass cls = vocab.token_class(ids[i]);
    if (!is_att(cls)) continue;
    int64_t days = i < att_days.size() ? att_days[i] : -1;
    if (days < 0) days = cls == TokenClass::AttLongTerm ? tokens::kLongTermNominalDays : vocab.info(ids[i]).value;
    batch.att.push_back({base + i, days});
  }
  batch.segments.lengths.push_back(ids.size());
}

LossBreakdown evaluate_batch(Model& model, const Batch& batch) {
  ad::Graph g;
  auto b = model.bind(g);
  return model.total_loss(g, b, batch, nullptr).parts;
}

std::vector<double> extract_representation(const Model& model, std::span<const TokenId> ids) {
  if (ids.empty()) throw ValidationError("extract_representation: empty sequence");
  InferenceSession s(model);
  for (TokenId t : ids) s.feed(t);
  return s.hidden();
}

}  // namespace ehrgen
