#include "simstudy/simstudy.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "common/errors.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"
#include "model/checkpoint.hpp"
#include "trainer/trainer.hpp"

namespace ehrgen {

int logic_rule(int x1, int x2, int t1, int t2) {
  if (x1 < 0 || x1 > 1 || x2 < 0 || x2 > 1) throw ValidationError("logic sample: x1 and x2 must be 0 or 1");
  if (t1 < 0 || t1 > t2 || t2 > kMaxTime) throw ValidationError("logic sample: need 0 <= t1 <= t2 <= 28");
  const int dt = t2 - t1;
  if (dt % 4 == 0 && x1 == 1) return 1;
  if (dt % 3 == 0 && x1 == 0) return 2;
  if (dt <= 7) return 3;
  if (dt <= 14) return 4;
  return 5;
}

int logic_label(int x1, int x2, int t1, int t2) {
  switch (logic_rule(x1, x2, t1, t2)) {
    case 1: return 1 - x2;
    case 2: return x2;
    case 3: return x1 ^ x2;
    case 4: return x1 & x2;
    default: return x1 | x2;
  }
}

std::vector<LogicSample> sample_logic_dataset(size_t n, uint64_t seed) {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a <= kMaxTime; ++a)
    for (int b = a; b <= kMaxTime; ++b) pairs.push_back({a, b});
  Rng rng = make_rng(seed, {0x6c6f676963});
  std::uniform_int_distribution<size_t> pick(0, pairs.size() - 1);
  std::uniform_int_distribution<int> bit(0, 1);
  std::vector<LogicSample> out(n);
  for (auto& s : out) {
    s.x1 = bit(rng);
    s.x2 = bit(rng);
    std::tie(s.t1, s.t2) = pairs[pick(rng)];
    s.y = logic_label(s.x1, s.x2, s.t1, s.t2);
  }
  return out;
}

HandcraftedTrace handcrafted_forward(int x1, int dt, int x2) {
  static constexpr double W1[3][6] = {{1, 0, 0, 1, 0, 0}, {0, -1, 0, 0, 1, 0}, {0, 0, 1, 0, 0, 1}};
  static constexpr double b1[6] = {0, 7.5, 0, 0, -7.5, 0};
  static constexpr double W2[6][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {0, 1, 0, 0},
                                      {0, 0, 1, 0}, {0, 0, 1, 1}, {0, 0, 0, 1}};
  static constexpr double b2[4] = {-1.5, -1.5, -1.5, -1.5};
  auto step = [](double v) { return v > 0 ? 1 : 0; };

  const double x[3] = {static_cast<double>(x1), static_cast<double>(dt), static_cast<double>(x2)};
  HandcraftedTrace tr;
  for (int j = 0; j < 6; ++j) {
    double z = b1[j];
    for (int i = 0; i < 3; ++i) z += x[i] * W1[i][j];
    tr.a1[j] = step(z);
  }
  for (int j = 0; j < 4; ++j) {
    double z = b2[j];
    for (int i = 0; i < 6; ++i) z += tr.a1[i] * W2[i][j];
    tr.a2[j] = step(z);
  }
  // Selector matrices pick (a2[0], a2[1]) for the XOR gate and (a2[2], a2[3]) for AND.
  const int gate_xor = tr.a2[0] ^ tr.a2[1];
  const int gate_and = tr.a2[2] & tr.a2[3];
  tr.y = gate_xor | gate_and;
  return tr;
}

void EncoderConfig::validate() const {
  if (embed_dim == 0 || layers == 0 || intermediate == 0) throw ValidationError("encoder: sizes must be positive");
  if (heads == 0 || embed_dim % heads != 0) throw ValidationError("encoder: heads must divide embed_dim");
  if (dropout != 0.0) throw ValidationError("encoder: dropout is not supported in the comparison");
  if (batch_size == 0 || eval_every == 0 || n_samples == 0) throw ValidationError("encoder: batch_size, eval_every and n_samples must be positive");
  if (!(lr > 0)) throw ValidationError("encoder: lr must be positive");
}

namespace {

constexpr int32_t kCls = 0;
constexpr int32_t kBit0 = 1;
constexpr int32_t kTime0 = 3;
constexpr size_t kVocab = kTime0 + kMaxTime + 1;
constexpr size_t kMaxPositions = 4;

int32_t time_id(int t) { return kTime0 + t; }

}  // namespace

LogicEncoder::LogicEncoder(const EncoderConfig& cfg, TimeInput mode, uint64_t seed) : cfg_(cfg), mode_(mode) {
  cfg_.validate();
  const size_t d = cfg.embed_dim, f = cfg.intermediate;
  auto add = [&](const std::string& name, size_t r, size_t c, double fill = 0.0) {
    params_.emplace_back(name, ad::Tensor(r, c, fill));
  };
  add("tok_emb", kVocab, d);
  add("pos_emb", kMaxPositions, d);
  add("ln_emb_g", 1, d, 1.0);
  add("ln_emb_b", 1, d);
  for (size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    add(p + "w_qkv", d, 3 * d);
    add(p + "b_qkv", 1, 3 * d);
    add(p + "w_o", d, d);
    add(p + "b_o", 1, d);
    add(p + "ln1_g", 1, d, 1.0);
    add(p + "ln1_b", 1, d);
    add(p + "w_ff1", d, f);
    add(p + "b_ff1", 1, f);
    add(p + "w_ff2", f, d);
    add(p + "b_ff2", 1, d);
    add(p + "ln2_g", 1, d, 1.0);
    add(p + "ln2_b", 1, d);
  }
  add("cls_w", d, 2);
  add("cls_b", 1, 2);

  Rng rng = make_rng(seed, {0x656e63, static_cast<uint64_t>(mode)});
  std::normal_distribution<double> normal(0.0, 0.02);
  for (auto& prm : params_) {
    const auto& n = prm.name;
    const bool is_gain_or_bias = n.find("_g") != std::string::npos || n.find("_b") != std::string::npos ||
                                 n.find(".b_") != std::string::npos;
    if (is_gain_or_bias) continue;
    for (double& v : prm.value.data) v = normal(rng);
  }
}

ad::Parameter& LogicEncoder::p(const std::string& name) {
  for (auto& prm : params_)
    if (prm.name == name) return prm;
  throw std::logic_error("no encoder parameter " + name);
}

std::vector<ad::Parameter*> LogicEncoder::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& prm : params_) out.push_back(&prm);
  return out;
}

ad::Var LogicEncoder::logits(ad::Graph& g, std::span<const LogicSample* const> batch) {
  const size_t len = mode_ == TimeInput::TimeToken ? 4 : 3;
  const size_t d = cfg_.embed_dim;
  auto bit_id = [&](int x) { return cfg_.shared_value_rows ? time_id(x) : kBit0 + x; };
  std::vector<int32_t> ids, time_ids, pos;
  std::vector<size_t> cls_rows;
  ad::Tensor time_mask(batch.size() * len, d, 1.0);
  for (size_t b = 0; b < batch.size(); ++b) {
    const LogicSample& s = *batch[b];
    cls_rows.push_back(b * len);
    if (mode_ == TimeInput::TimeToken) {
      for (int32_t t : {kCls, bit_id(s.x1), time_id(s.t2 - s.t1), bit_id(s.x2)}) ids.push_back(t);
    } else {
      for (int32_t t : {kCls, bit_id(s.x1), bit_id(s.x2)}) ids.push_back(t);
      for (int32_t t : {kCls, time_id(s.t1), time_id(s.t2)}) time_ids.push_back(t);
      for (size_t c = 0; c < d; ++c) time_mask.at(b * len, c) = 0.0;
    }
    for (size_t i = 0; i < len; ++i) pos.push_back(static_cast<int32_t>(i));
  }
  ad::Var tok = g.param(p("tok_emb"));
  ad::Var h = ad::embedding(g, tok, ids);
  if (mode_ == TimeInput::Summation)
    h = ad::add(g, h, ad::mul(g, ad::embedding(g, tok, time_ids), g.constant(std::move(time_mask))));
  h = ad::add(g, h, ad::embedding(g, g.param(p("pos_emb")), pos));
  h = ad::layer_norm(g, h, g.param(p("ln_emb_g")), g.param(p("ln_emb_b")));

  ad::Segments segs;
  segs.lengths.assign(batch.size(), len);
  for (size_t l = 0; l < cfg_.layers; ++l) {
    const std::string pre = "block" + std::to_string(l) + ".";
    auto P = [&](const char* n) { return g.param(p(pre + n)); };
    ad::Var qkv = ad::linear(g, h, P("w_qkv"), P("b_qkv"));
    ad::Var att = ad::linear(g, ad::attention(g, qkv, segs, cfg_.heads, false), P("w_o"), P("b_o"));
    h = ad::layer_norm(g, ad::add(g, h, att), P("ln1_g"), P("ln1_b"));
    ad::Var ff = ad::linear(g, ad::gelu(g, ad::linear(g, h, P("w_ff1"), P("b_ff1"))), P("w_ff2"), P("b_ff2"));
    h = ad::layer_norm(g, ad::add(g, h, ff), P("ln2_g"), P("ln2_b"));
  }
  return ad::linear(g, ad::gather_rows(g, h, cls_rows), g.param(p("cls_w")), g.param(p("cls_b")));
}

double LogicEncoder::accuracy(std::span<const LogicSample> data) {
  std::vector<const LogicSample*> ptrs;
  for (const auto& s : data) ptrs.push_back(&s);
  ad::Graph g;
  const ad::Tensor& z = g.value(logits(g, ptrs));
  size_t hits = 0;
  for (size_t i = 0; i < data.size(); ++i) hits += (z.at(i, 1) > z.at(i, 0) ? 1 : 0) == data[i].y;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::optional<size_t> ComparisonCurves::first_reaching(double level) const {
  for (size_t i = 0; i < steps.size(); ++i)
    if (acc_timetoken[i] >= level) return i;
  return std::nullopt;
}

std::string ComparisonCurves::to_csv() const {
  std::ostringstream o;
  o << "step,acc_timetoken,acc_sum\n";
  for (size_t i = 0; i < steps.size(); ++i) o << steps[i] << ',' << acc_timetoken[i] << ',' << acc_sum[i] << '\n';
  return o.str();
}

std::string ComparisonCurves::to_long_csv() const {
  std::ostringstream o;
  o << "step,model,accuracy\n";
  for (size_t i = 0; i < steps.size(); ++i) {
    o << steps[i] << ",timetoken," << acc_timetoken[i] << '\n';
    o << steps[i] << ",sum," << acc_sum[i] << '\n';
  }
  return o.str();
}

namespace {

std::vector<double> train_curve(const EncoderConfig& cfg, TimeInput mode, const std::vector<LogicSample>& data,
                                uint64_t seed) {
  LogicEncoder model(cfg, mode, seed);
  auto params = model.parameters();
  TrainConfig opt;
  opt.learning_rate = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  OptimizerState state;
  AdamW adam(opt, state);

  Rng rng = make_rng(seed, {0x62617463, static_cast<uint64_t>(mode)});
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();

  std::vector<double> curve{model.accuracy(data)};
  for (uint64_t step = 1; step <= cfg.steps; ++step) {
    std::vector<const LogicSample*> batch;
    std::vector<int32_t> labels;
    while (batch.size() < cfg.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
        if (!batch.empty()) break;  // epoch boundary ends a short batch
      }
      batch.push_back(&data[order[cursor]]);
      labels.push_back(data[order[cursor++]].y);
    }
    for (auto* prm : params) prm->zero_grad();
    ad::Graph g;
    ad::Var loss = ad::scale(g, ad::cross_entropy_sum(g, model.logits(g, batch), labels),
                             1.0 / static_cast<double>(batch.size()));
    const double v = g.value(loss).item();
    if (!std::isfinite(v)) {
      throw RuntimeFailure(std::string("sim-study: non-finite loss at step ") + std::to_string(step) + " for the " +
                           (mode == TimeInput::TimeToken ? "time-token" : "summation") + " model");
    }
    g.backward(loss);
    adam.step(params, cfg.lr);
    if (step % cfg.eval_every == 0) curve.push_back(model.accuracy(data));
  }
  return curve;
}

}  // namespace

ComparisonCurves run_comparison(const EncoderConfig& cfg, uint64_t seed, unsigned threads) {
  cfg.validate();
  const auto data = sample_logic_dataset(cfg.n_samples, seed);
  std::vector<double> curves[2];
  parallel_for(2, threads, [&](size_t m) {
    curves[m] = train_curve(cfg, m == 0 ? TimeInput::TimeToken : TimeInput::Summation, data, seed);
  });
  ComparisonCurves out;
  out.acc_timetoken = std::move(curves[0]);
  out.acc_sum = std::move(curves[1]);
  for (size_t i = 0; i < out.acc_timetoken.size(); ++i) out.steps.push_back(i * cfg.eval_every);
  double pos = 0.0;
  for (const auto& s : data) pos += s.y;
  out.base_rate = pos / static_cast<double>(data.size());
  return out;
}

}  // namespace ehrgen
