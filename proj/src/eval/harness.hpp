#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "codec/tables.hpp"
#include "eval/metrics.hpp"
#include "model/model.hpp"

namespace ehrgen {

// Column assignment for bag-of-words features: concept ids in ascending order.
class ConceptIndex {
 public:
  static ConceptIndex build(std::span<const PatientRecord> records);
  size_t size() const { return concepts_.size(); }
  std::optional<size_t> column(int64_t concept_id) const;
  const std::vector<int64_t>& concepts() const { return concepts_; }

 private:
  std::vector<int64_t> concepts_;
  std::unordered_map<int64_t, size_t> index_;
};

// Counts of each indexed concept with event date in [from, to]. Unindexed concepts are ignored.
std::vector<double> bow_features(const PatientRecord& record, const ConceptIndex& index, Day from, Day to);

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  size_t iterations = 0;
  double grad_norm = 0.0;

  double decision(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
};

struct LogisticOptions {
  double l2 = 0.0;  // penalty (l2/2)|w|^2; the bias is not penalized
  size_t max_iter = 5000;
  double tolerance = 1e-6;
};

// Mean logistic loss plus L2 penalty, minimized by gradient descent with Barzilai-Borwein
// trial steps and Armijo backtracking.
LogisticModel fit_logistic(const std::vector<std::vector<double>>& X, std::span<const int> y,
                           const LogisticOptions& opts = {});

struct ProbeResult {
  ClassificationMetrics metrics;
  LogisticModel classifier;
};

ProbeResult probe_features(const std::vector<std::vector<double>>& x_train, std::span<const int> y_train,
                           const std::vector<std::vector<double>>& x_test, std::span<const int> y_test,
                           const LogisticOptions& opts, size_t n_bootstrap, uint64_t seed);

struct ProbeExample {
  std::vector<TokenId> ids;
  int label = 0;
};

// Logistic regression on frozen final-position representations.
ProbeResult linear_probe(const Model& model, std::span<const ProbeExample> train, std::span<const ProbeExample> test,
                         const LogisticOptions& opts, size_t n_bootstrap, uint64_t seed, unsigned threads = 1);

struct PrevalenceRow {
  std::string population;  // full, female, hospitalized
  Domain domain = Domain::Condition;
  int64_t concept_id = 0;
  double real = 0.0;
  double synthetic = 0.0;
};

// Fraction of persons with at least one occurrence, per concept, for each sub-population.
std::vector<PrevalenceRow> prevalence_report(const EventTables& real, const EventTables& synthetic,
                                             const CodecConfig& codec);
std::string prevalence_csv(const std::vector<PrevalenceRow>& rows);

struct CohortSpec {
  std::string name = "cohort";
  std::set<int64_t> index_concepts;
  int64_t lookback_days = 365;
  std::set<int64_t> outcome_concepts;
  int64_t outcome_window_days = 0;
  int64_t interval_days = 120;
  int64_t repetitions = 9;

  void validate() const;
  static CohortSpec load(const std::filesystem::path& path);
  static CohortSpec parse(const std::string& yaml_text, const std::string& source);
};

struct PathwayResult {
  std::vector<std::string> members;
  size_t persons = 0;
  double prevalence = 0.0;
};

// First index-concept exposure with at least lookback_days of prior records, then at least one
// exposure in each of `repetitions` consecutive half-open intervals of interval_days.
PathwayResult pathway_cohort(const EventTables& tables, const CohortSpec& spec);

struct LabeledIndex {
  std::string person_id;
  Day index_date;
  int label = 0;
};

// Index = first index-concept event with enough lookback; label = outcome concept (event or
// visit type) within (index, index + outcome_window_days].
std::vector<LabeledIndex> outcome_cohort(const EventTables& tables, const CohortSpec& spec);

std::vector<LabeledIndex> read_cohort(const std::filesystem::path& path);
void write_cohort(const std::filesystem::path& path, const std::vector<LabeledIndex>& cohort);

// Encoded history up to the index date: visits starting on or before it, no [END].
TokenSequence prefix_sequence(const PatientRecord& record, Day index_date, const CodecConfig& codec);

}  // namespace ehrgen
