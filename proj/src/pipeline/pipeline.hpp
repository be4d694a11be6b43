#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "codec/tables.hpp"
#include "eval/harness.hpp"
#include "model/checkpoint.hpp"
#include "tensor/gradcheck.hpp"
#include "trainer/trainer.hpp"
#include "zeroshot/zeroshot.hpp"

namespace ehrgen {

// YAML with the ModelConfig field names except vocab_size, which comes from the corpus.
ModelConfig parse_model_config(const std::string& yaml_text, const std::string& source);
ModelConfig load_model_config(const std::filesystem::path& path);

struct TrainRun {
  TrainResult result;
  size_t train_sequences = 0;
  size_t eval_sequences = 0;
  size_t dropped_short = 0;
  size_t dropped_invalid = 0;
  size_t truncated = 0;
  size_t vocab_size = 0;
  size_t parameters = 0;
  bool resumed = false;
};

// Encodes, splits, builds the vocabulary, packs and trains. With resume, continues from
// out_dir/latest.bin when present. Writes vocab.txt, loss.csv and checkpoints into out_dir.
TrainRun train_from_records(std::span<const PatientRecord> records, const CodecConfig& codec, ModelConfig model_cfg,
                            const TrainConfig& cfg, const std::filesystem::path& out_dir, bool resume);

// Token ids of the history before each index date. Concept tokens missing from the vocabulary
// are dropped; the oldest tokens are cut so that `reserve` positions stay free in the context.
struct PrefixBuild {
  std::vector<std::vector<TokenId>> ids;  // aligned with the cohort; empty when skipped
  size_t skipped = 0;
  size_t dropped_tokens = 0;
};
PrefixBuild cohort_prefixes(std::span<const PatientRecord> records, std::span<const LabeledIndex> cohort,
                            const CodecConfig& codec, const Vocabulary& vocab, size_t context_window, size_t reserve);

struct ZeroShotRun {
  std::vector<CohortMember> members;
  TaskEvaluation evaluation;
  size_t skipped = 0;

  std::string predictions_csv() const;
};

ZeroShotRun zeroshot_from_records(const Checkpoint& ck, const TaskConfig& task, const ConceptAncestry* ancestry,
                                  std::span<const PatientRecord> records, std::span<const LabeledIndex> cohort,
                                  const CodecConfig& codec, uint64_t seed, size_t n_bootstrap, unsigned threads);

ProbeResult probe_from_records(const Checkpoint& ck, std::span<const PatientRecord> records,
                               std::span<const LabeledIndex> train, std::span<const LabeledIndex> test,
                               const CodecConfig& codec, const LogisticOptions& opts, size_t n_bootstrap,
                               uint64_t seed, unsigned threads);

struct ToyGradCheckConfig {
  size_t embed_dim = 6;
  size_t n_layers = 2;
  size_t n_heads = 2;
  size_t n_sequences = 2;
  size_t seq_len = 12;
  double eps = 1e-5;
  size_t entries_per_param = 24;  // 0 = every entry

  void validate() const;
  static ToyGradCheckConfig parse(const std::string& yaml_text, const std::string& source);
  static ToyGradCheckConfig load(const std::filesystem::path& path);
};

// Finite-difference check of the full training loss on a random packed batch with time tokens.
ad::GradCheckResult model_gradcheck(const ToyGradCheckConfig& cfg, uint64_t seed);

}  // namespace ehrgen
