#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "codec/codec.hpp"
#include "codec/vocabulary.hpp"
#include "model/model.hpp"

namespace ehrgen {

struct OptimizerState {
  uint64_t step = 0;
  std::vector<ad::Tensor> m, v;  // empty before the first update
};

struct TrainerState {
  uint64_t epoch = 0;          // epoch in progress
  uint64_t batch_cursor = 0;   // next batch index within that epoch
  uint64_t global_step = 0;
  double best_eval = std::numeric_limits<double>::infinity();
  uint64_t bad_epochs = 0;
  bool finished = false;
};

// Empirical joint distribution of the four demographic prefix tokens.
class PromptDistribution {
 public:
  using Prefix = std::array<std::string, 4>;

  void add(const Prefix& prefix, uint64_t count = 1) { counts_[prefix] += count; }
  static PromptDistribution from_corpus(std::span<const TokenSequence> corpus);
  bool empty() const { return counts_.empty(); }
  uint64_t total() const;
  const std::map<Prefix, uint64_t>& counts() const { return counts_; }
  Prefix sample(Rng& rng) const;

 private:
  std::map<Prefix, uint64_t> counts_;
};

// Everything needed to resume training or run inference.
struct Checkpoint {
  Model model;
  Vocabulary vocab;
  OptimizerState optimizer;
  TrainerState trainer;
  PromptDistribution prompts;
  uint64_t seed = 0;

  // Binary container; written to a temp file and renamed into place.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace ehrgen
