#include "trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "common/config.hpp"
#include "common/csv.hpp"
#include "common/errors.hpp"

namespace ehrgen {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("train config: " + field + " " + why);
  };
  if (!(learning_rate > 0)) fail("learning_rate", "must be positive");
  if (weight_decay < 0) fail("weight_decay", "must be nonnegative");
  if (!(beta1 > 0 && beta1 < 1)) fail("beta1", "must be in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) fail("beta2", "must be in (0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps", "must be positive");
  if (max_epochs == 0) fail("max_epochs", "must be positive");
  if (tokens_per_batch == 0) fail("tokens_per_batch", "must be positive");
  if (checkpoint_every_steps == 0) fail("checkpoint_every_steps", "must be positive");
  if (early_stop_patience == 0) fail("early_stop_patience", "must be positive");
  if (!(eval_fraction > 0 && eval_fraction < 1)) fail("eval_fraction", "must be in (0, 1)");
  if (min_seq_tokens == 0) fail("min_seq_tokens", "must be positive");
}

TrainConfig TrainConfig::parse(const std::string& yaml_text, const std::string& source) {
  YAML::Node n = parse_yaml(yaml_text, source);
  check_keys(n,
             {"learning_rate", "weight_decay", "beta1", "beta2", "adam_eps", "warmup_steps", "max_epochs", "max_steps",
              "tokens_per_batch", "checkpoint_every_steps", "early_stop_patience", "eval_fraction", "min_seq_tokens",
              "seed"},
             source);
  TrainConfig c;
  c.learning_rate = yaml_get(n, "learning_rate", c.learning_rate, source);
  c.weight_decay = yaml_get(n, "weight_decay", c.weight_decay, source);
  c.beta1 = yaml_get(n, "beta1", c.beta1, source);
  c.beta2 = yaml_get(n, "beta2", c.beta2, source);
  c.adam_eps = yaml_get(n, "adam_eps", c.adam_eps, source);
  c.warmup_steps = yaml_get(n, "warmup_steps", c.warmup_steps, source);
  c.max_epochs = yaml_get(n, "max_epochs", c.max_epochs, source);
  c.max_steps = yaml_get(n, "max_steps", c.max_steps, source);
  c.tokens_per_batch = yaml_get(n, "tokens_per_batch", c.tokens_per_batch, source);
  c.checkpoint_every_steps = yaml_get(n, "checkpoint_every_steps", c.checkpoint_every_steps, source);
  c.early_stop_patience = yaml_get(n, "early_stop_patience", c.early_stop_patience, source);
  c.eval_fraction = yaml_get(n, "eval_fraction", c.eval_fraction, source);
  c.min_seq_tokens = yaml_get(n, "min_seq_tokens", c.min_seq_tokens, source);
  c.seed = yaml_get(n, "seed", c.seed, source);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

double learning_rate_at(const TrainConfig& cfg, uint64_t step) {
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

PreparedCorpus prepare_sequences(std::vector<TokenSequence> sequences, size_t context_window, const TrainConfig& cfg) {
  PreparedCorpus out;
  std::vector<TokenSequence> kept;
  for (auto& s : sequences) {
    if (s.tokens.size() < cfg.min_seq_tokens) {
      ++out.dropped_short;
      continue;
    }
    if (s.tokens.size() > context_window) {
      s.tokens.resize(context_window);
      if (s.att_days.size() > context_window) s.att_days.resize(context_window);
      ++out.truncated;
    }
    kept.push_back(std::move(s));
  }
  if (kept.empty()) throw ValidationError("corpus is empty after the minimum-length filter");
  std::vector<size_t> order(kept.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng = make_rng(cfg.seed, {0x73706c6974});
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_eval = static_cast<size_t>(std::ceil(cfg.eval_fraction * static_cast<double>(kept.size())));
  if (kept.size() < 2) n_eval = 0;
  n_eval = std::min(n_eval, kept.size() - 1);
  for (size_t i = 0; i < order.size(); ++i)
    (i < n_eval ? out.eval : out.train).push_back(std::move(kept[order[i]]));
  return out;
}

PreparedCorpus prepare_corpus(std::span<const PatientRecord> records, const CodecConfig& codec, size_t context_window,
                              const TrainConfig& cfg) {
  std::vector<TokenSequence> seqs;
  size_t invalid = 0;
  for (const auto& r : records) {
    try {
      seqs.push_back(encode_patient(r, codec));
    } catch (const ValidationError&) {
      ++invalid;
    }
  }
  PreparedCorpus out = prepare_sequences(std::move(seqs), context_window, cfg);
  out.dropped_invalid = invalid;
  return out;
}

EncodedSequence encode_ids(const TokenSequence& seq, const Vocabulary& vocab) {
  return {vocab.ids(seq.tokens), seq.att_days};
}

std::vector<std::vector<size_t>> pack_indices(std::span<const size_t> lengths, size_t budget) {
  std::vector<size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return lengths[a] > lengths[b]; });
  std::vector<std::vector<size_t>> bins;
  std::vector<size_t> fill;
  for (size_t i : order) {
    if (lengths[i] > budget)
      throw ValidationError("sequence of " + std::to_string(lengths[i]) + " tokens exceeds the batch budget of " +
                            std::to_string(budget));
    size_t b = 0;
    while (b < bins.size() && fill[b] + lengths[i] > budget) ++b;
    if (b == bins.size()) {
      bins.emplace_back();
      fill.push_back(0);
    }
    bins[b].push_back(i);
    fill[b] += lengths[i];
  }
  return bins;
}

std::vector<Batch> pack(std::span<const EncodedSequence> sequences, size_t tokens_per_batch, const Vocabulary& vocab) {
  std::vector<size_t> lengths;
  for (const auto& s : sequences) lengths.push_back(s.ids.size());
  std::vector<Batch> batches;
  for (const auto& bin : pack_indices(lengths, tokens_per_batch)) {
    Batch b;
    for (size_t i : bin) append_segment(b, vocab, sequences[i].ids, sequences[i].att_days);
    batches.push_back(std::move(b));
  }
  return batches;
}

void AdamW::step(std::span<ad::Parameter* const> params, double lr) {
  if (state_.m.empty()) {
    for (auto* p : params) {
      state_.m.emplace_back(p->value.rows, p->value.cols);
      state_.v.emplace_back(p->value.rows, p->value.cols);
    }
  }
  if (state_.m.size() != params.size()) throw RuntimeFailure("optimizer state does not match the parameter list");
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value.data;
    const auto& g = params[k]->grad.data;
    auto& m = state_.m[k].data;
    auto& v = state_.v[k].data;
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
      w[i] -= lr * cfg_.weight_decay * w[i] + lr * update;
    }
  }
}

EvalResult evaluate(Model& model, std::span<const Batch> batches) {
  EvalResult r;
  double weighted = 0.0, ntp = 0.0;
  size_t tokens = 0, targets = 0;
  for (const auto& b : batches) {
    LossBreakdown l = evaluate_batch(model, b);
    weighted += l.total * static_cast<double>(l.tokens);
    tokens += l.tokens;
    ntp += l.ntp_sum;
    targets += l.ntp_targets;
  }
  if (tokens) r.loss = weighted / static_cast<double>(tokens);
  if (targets) r.ntp_per_target = ntp / static_cast<double>(targets);
  return r;
}

namespace {

std::string format_row(const LossRow& r) {
  std::ostringstream o;
  o.precision(10);
  o << r.step << ',' << r.train_loss << ',';
  if (r.eval_loss) o << *r.eval_loss;
  o << ',' << r.ntp << ',' << r.td << ',' << r.tte << '\n';
  return o.str();
}

class CurveWriter {
 public:
  explicit CurveWriter(const std::filesystem::path& dir) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    auto path = dir / "loss.csv";
    const bool fresh = !std::filesystem::exists(path);
    out_.open(path, std::ios::app);
    if (!out_) throw RuntimeFailure("cannot write " + path.string());
    if (fresh) out_ << "step,train_loss,eval_loss,ntp,td,tte\n";
  }
  void write(const LossRow& r) {
    if (out_.is_open()) out_ << format_row(r) << std::flush;
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainResult train(Checkpoint& ck, std::span<const Batch> train_batches, std::span<const Batch> eval_batches,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train_batches.empty()) throw ValidationError("train: no training batches");
  if (ck.model.config().vocab_size != ck.vocab.size())
    throw ValidationError("train: model vocabulary size does not match the vocabulary");
  TrainResult result;
  TrainerState& st = ck.trainer;
  auto params = ck.model.parameter_ptrs();
  AdamW opt(cfg, ck.optimizer);
  CurveWriter curve(hooks.out_dir);
  const bool write = !hooks.out_dir.empty();

  auto save = [&](const std::string& name) {
    if (write) ck.save(hooks.out_dir / name);
  };
  auto record_eval = [&](LossRow& row) {
    if (eval_batches.empty()) return false;
    result.last_eval = evaluate(ck.model, eval_batches);
    row.eval_loss = result.last_eval.loss;
    return hooks.on_eval && hooks.on_eval(st.global_step, result.last_eval);
  };
  auto at_step_cap = [&] { return cfg.max_steps > 0 && st.global_step >= cfg.max_steps; };

  bool stop = st.finished;
  while (!stop && st.epoch < cfg.max_epochs && !at_step_cap()) {
    std::vector<size_t> order(train_batches.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng = make_rng(cfg.seed, {0x65706f6368, st.epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    while (!at_step_cap() && !stop) {
      const size_t bi = order[st.batch_cursor];
      ++st.global_step;
      for (auto* p : params) p->zero_grad();
      Rng dropout_rng = make_rng(cfg.seed, {0x64726f70, st.global_step});
      ad::Graph g;
      auto bound = ck.model.bind(g);
      auto loss = ck.model.total_loss(g, bound, train_batches[bi], &dropout_rng);
      if (!std::isfinite(loss.parts.total)) {
        auto bad = g.first_non_finite();
        throw RuntimeFailure("non-finite loss at step " + std::to_string(st.global_step) + ", batch " +
                             std::to_string(bi) + ", first bad op " +
                             (bad ? std::string(g.op_name(*bad)) + " (node " + std::to_string(bad->index) + ")"
                                  : std::string("unknown")));
      }
      g.backward(loss.total);
      opt.step(params, learning_rate_at(cfg, st.global_step));
      ++st.batch_cursor;

      LossRow row{st.global_step, loss.parts.total, std::nullopt, loss.parts.ntp, loss.parts.td, loss.parts.tte};
      if (st.batch_cursor == order.size()) {
        // Epoch end: evaluate and apply early stopping.
        ++st.epoch;
        st.batch_cursor = 0;
        if (!eval_batches.empty()) {
          stop = record_eval(row);
          const double cur = result.last_eval.loss;
          if (!std::isfinite(st.best_eval) || st.best_eval - cur >= 1e-3 * std::abs(st.best_eval)) {
            st.best_eval = cur;
            st.bad_epochs = 0;
            save("best.bin");
          } else {
            st.best_eval = std::min(st.best_eval, cur);
            if (++st.bad_epochs >= cfg.early_stop_patience) {
              result.early_stopped = true;
              stop = true;
            }
          }
        }
      } else if (hooks.eval_every_steps > 0 && st.global_step % hooks.eval_every_steps == 0) {
        stop = record_eval(row);
      }
      if (st.global_step % cfg.checkpoint_every_steps == 0) {
        save("ckpt-step" + std::to_string(st.global_step) + ".bin");
        save("latest.bin");
      }
      curve.write(row);
      if (hooks.on_step) hooks.on_step(row);
      result.curve.push_back(row);
      if (st.batch_cursor == 0) break;
    }
  }
  if (stop || st.epoch >= cfg.max_epochs) st.finished = true;
  save("latest.bin");
  result.steps = st.global_step;
  result.best_eval = st.best_eval;
  return result;
}

}  // namespace ehrgen
