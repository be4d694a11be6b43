#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "codec/codec.hpp"
#include "codec/records.hpp"
#include "codec/vocabulary.hpp"
#include "model/checkpoint.hpp"
#include "model/model.hpp"

namespace ehrgen {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t warmup_steps = 500;
  uint64_t max_epochs = 10;
  uint64_t max_steps = 0;  // 0 = no step cap
  size_t tokens_per_batch = 16384;
  uint64_t checkpoint_every_steps = 20000;
  uint64_t early_stop_patience = 1;
  double eval_fraction = 0.1;
  size_t min_seq_tokens = 20;
  uint64_t seed = 0;

  void validate() const;
  static TrainConfig load(const std::filesystem::path& path);
  static TrainConfig parse(const std::string& yaml_text, const std::string& source);
};

// Linear warmup to the base rate, then constant. Steps count from 1.
double learning_rate_at(const TrainConfig& cfg, uint64_t step);

struct EncodedSequence {
  std::vector<TokenId> ids;
  std::vector<int64_t> att_days;
};

struct PreparedCorpus {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> eval;
  size_t dropped_short = 0;
  size_t dropped_invalid = 0;
  size_t truncated = 0;
};

// Encodes, drops sequences shorter than min_seq_tokens, truncates to the context window and
// splits train/eval with a seeded shuffle.
PreparedCorpus prepare_corpus(std::span<const PatientRecord> records, const CodecConfig& codec,
                              size_t context_window, const TrainConfig& cfg);
// Same, starting from already encoded sequences.
PreparedCorpus prepare_sequences(std::vector<TokenSequence> sequences, size_t context_window, const TrainConfig& cfg);

EncodedSequence encode_ids(const TokenSequence& seq, const Vocabulary& vocab);

// First-fit-decreasing bin assignment: groups of item indices, each within budget.
std::vector<std::vector<size_t>> pack_indices(std::span<const size_t> lengths, size_t budget);
std::vector<Batch> pack(std::span<const EncodedSequence> sequences, size_t tokens_per_batch, const Vocabulary& vocab);

// Decoupled weight decay Adam over a fixed parameter list.
class AdamW {
 public:
  AdamW(const TrainConfig& cfg, OptimizerState& state) : cfg_(cfg), state_(state) {}
  void step(std::span<ad::Parameter* const> params, double lr);

 private:
  const TrainConfig& cfg_;
  OptimizerState& state_;
};

struct LossRow {
  uint64_t step = 0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
  double ntp = 0.0, td = 0.0, tte = 0.0;
};

struct EvalResult {
  double loss = 0.0;            // token-weighted mean of total loss
  double ntp_per_target = 0.0;  // mean next-token cross-entropy over target positions
};
EvalResult evaluate(Model& model, std::span<const Batch> batches);

struct TrainResult {
  std::vector<LossRow> curve;
  uint64_t steps = 0;
  bool early_stopped = false;
  double best_eval = 0.0;
  EvalResult last_eval;
};

struct TrainHooks {
  std::filesystem::path out_dir;  // empty: no files written
  std::function<void(const LossRow&)> on_step;
  // Called after each evaluation; return true to stop training.
  std::function<bool(uint64_t step, const EvalResult&)> on_eval;
  uint64_t eval_every_steps = 0;  // extra evaluations between epoch ends (0 = off)
};

// Runs (or resumes, from ck.trainer/ck.optimizer) the optimization loop.
TrainResult train(Checkpoint& ck, std::span<const Batch> train_batches, std::span<const Batch> eval_batches,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace ehrgen
