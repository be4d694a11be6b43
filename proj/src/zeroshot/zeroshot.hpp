#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "codec/vocabulary.hpp"
#include "eval/metrics.hpp"
#include "generator/sampler.hpp"

namespace ehrgen {

struct TaskConfig {
  std::string task_name;
  std::vector<int64_t> outcome_events;
  bool include_descendants = false;
  int64_t prediction_window_start = 0;
  int64_t prediction_window_end = 0;
  size_t max_new_tokens = 128;
  size_t n_simulations = 50;

  void validate() const;
  // YAML with the task listing field names; outcome ids may be quoted strings.
  static TaskConfig load(const std::filesystem::path& path);
  static TaskConfig parse(const std::string& yaml_text, const std::string& source);
};

class ConceptAncestry {
 public:
  void add(int64_t ancestor, int64_t descendant) { children_[ancestor].insert(descendant); }
  // Two-column delimited file with header ancestor_id,descendant_id.
  static ConceptAncestry load(const std::filesystem::path& path);
  // Reflexive, transitive closure below `concept_id`.
  std::set<int64_t> descendants(int64_t concept_id) const;

 private:
  std::map<int64_t, std::set<int64_t>> children_;
};

std::set<int64_t> expand_outcomes(const TaskConfig& task, const ConceptAncestry* ancestry);

// What a generated token means for window bookkeeping.
struct TokenMeaning {
  int64_t days = 0;      // elapsed time it adds (inter- and intra-visit time tokens)
  bool outcome = false;  // concept or visit-type token in the outcome set
  bool end = false;
};
std::vector<TokenMeaning> token_meanings(const Vocabulary& vocab, const std::set<int64_t>& outcomes);

enum class TrajectoryOutcome { Pending, Positive, Negative, Censored };

// Consumes generated tokens one at a time and reports when a simulation is decided.
class WindowTracker {
 public:
  WindowTracker(const std::vector<TokenMeaning>& meanings, int64_t start, int64_t end)
      : meanings_(&meanings), start_(start), end_(end) {}
  TrajectoryOutcome step(TokenId token);
  int64_t elapsed() const { return elapsed_; }

 private:
  const std::vector<TokenMeaning>* meanings_;
  int64_t start_, end_;
  int64_t elapsed_ = 0;
};

// Outcome of a complete generated continuation; running out of tokens counts as negative.
TrajectoryOutcome classify_trajectory(std::span<const TokenId> generated, const std::vector<TokenMeaning>& meanings,
                                      int64_t window_start, int64_t window_end);

struct SimulationResult {
  double probability = 0.0;
  size_t positives = 0;
  size_t completed = 0;  // uncensored simulations
  size_t censored = 0;
  size_t attempts = 0;
  bool cap_reached = false;  // fewer than n_simulations completed within 4n attempts
};

// `primed` already holds the patient prefix; it is cloned per simulation.
SimulationResult simulate_probability(const Decoder& primed, const std::vector<TokenMeaning>& meanings,
                                      const TaskConfig& task, uint64_t seed, const SamplingConfig& sampling = {});

struct CohortMember {
  std::string person_id;
  std::vector<TokenId> prefix;
  int label = 0;
};

struct TaskEvaluation {
  std::vector<SimulationResult> simulations;
  ClassificationMetrics metrics;
  size_t capped = 0;
};

TaskEvaluation evaluate_task(const Decoder& model, std::span<const CohortMember> cohort,
                             const std::vector<TokenMeaning>& meanings, const TaskConfig& task, uint64_t seed,
                             size_t n_bootstrap, unsigned threads, const SamplingConfig& sampling = {});

}  // namespace ehrgen
