#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "codec/tables.hpp"
#include "codec/vocabulary.hpp"
#include "generator/sampler.hpp"
#include "model/checkpoint.hpp"

namespace ehrgen {

struct ExpertSpec {
  SamplingConfig sampling;
  size_t count = 0;
};

// YAML: `experts:` list of blocks with the SamplingConfig field names plus `count`.
std::vector<ExpertSpec> load_experts(const std::filesystem::path& path);
std::vector<ExpertSpec> parse_experts(const std::string& yaml_text, const std::string& source);

struct Expert {
  ExpertSpec spec;
  const Decoder* decoder = nullptr;  // cloned per sequence
  const PromptDistribution* prompts = nullptr;
};

struct PoolEntry {
  TokenSequence sequence;
  size_t expert = 0;
  size_t index = 0;
  uint64_t seed = 0;
  bool hit_max_tokens = false;
};

struct SyntheticPool {
  std::vector<PoolEntry> entries;  // after the min-length filter, in (expert, index) order
  std::vector<size_t> generated;   // per expert, before filtering
  std::vector<size_t> kept;        // per expert
  size_t filtered_short = 0;
};

// Samples count sequences per expert with stream seed derive(expert seed, expert, index),
// then drops sequences shorter than the expert's min_tokens.
SyntheticPool generate_pool(std::span<const Expert> experts, const Vocabulary& vocab, unsigned threads);

std::vector<SequenceFileRow> pool_rows(const SyntheticPool& pool);

struct ConversionReport {
  size_t attempted = 0;
  size_t succeeded = 0;
  std::map<std::string, size_t> failures;  // reason code -> count

  // "converted" plus each failure reason, as fractions of attempted (sum to 1).
  std::vector<std::pair<std::string, double>> fractions() const;
  double success_rate() const;
  std::string to_csv() const;
};

struct Conversion {
  std::vector<PatientRecord> records;  // fresh person ids 1..n
  EventTables tables;
  ConversionReport report;
};

// Decodes each sequence; a sequence without [END] is cut after its last complete visit.
Conversion convert_to_tables(std::span<const TokenSequence> corpus, const CodecConfig& codec);

struct SummaryStats {
  size_t persons = 0;
  double median_age = 0.0;  // at first visit
  double female_percent = 0.0;
  std::array<double, 3> visit_quartiles{};  // Q1, median, Q3
  std::array<double, 3> token_quartiles{};

  std::string to_csv(const std::string& label) const;
  static std::string csv_header();
};

SummaryStats summary_stats(const EventTables& tables, const CodecConfig& codec);

inline constexpr int64_t kFemaleConcept = 8532;

}  // namespace ehrgen
