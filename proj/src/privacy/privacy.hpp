#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "codec/tables.hpp"

namespace ehrgen {

// Fixed-width bit vector; one bit per schema feature.
class BinaryProfile {
 public:
  BinaryProfile() = default;
  explicit BinaryProfile(size_t dim) : dim_(dim), words_((dim + 63) / 64, 0) {}

  size_t dim() const { return dim_; }
  bool get(size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(size_t i, bool on = true);
  size_t count() const;
  const std::vector<uint64_t>& words() const { return words_; }

  bool operator==(const BinaryProfile&) const = default;
  auto operator<=>(const BinaryProfile&) const = default;

 private:
  size_t dim_ = 0;
  std::vector<uint64_t> words_;
};

size_t hamming(const BinaryProfile& a, const BinaryProfile& b);
// Hamming distance restricted to features whose bit is set in mask.
size_t hamming_masked(const BinaryProfile& a, const BinaryProfile& b, const BinaryProfile& mask);

BinaryProfile profile_from_bits(const std::vector<int>& bits);

// Feature layout: gender one-hot, race one-hot, birth decade one-hot, then concept presence.
struct ProfileSchema {
  std::vector<int64_t> genders;
  std::vector<int64_t> races;
  std::vector<int> birth_decades;
  std::vector<int64_t> concepts;

  // Union of values observed across all tables, sorted.
  static ProfileSchema build(std::span<const EventTables* const> tables);
  size_t dim() const { return genders.size() + races.size() + birth_decades.size() + concepts.size(); }
  size_t demographic_dim() const { return genders.size() + races.size() + birth_decades.size(); }
  // gender:<id>, race:<id>, birth_decade:<year>, concept:<id>
  std::vector<std::string> feature_names() const;
  size_t feature(const std::string& name) const;
};

// One profile per person in person-table order. Values absent from the schema are ignored.
std::vector<BinaryProfile> profiles_from_tables(const EventTables& tables, const ProfileSchema& schema);

// AA(eval, synthetic) - AA(train, synthetic) on n-record seeded subsamples of each set.
double nnaa_risk(std::span<const BinaryProfile> train, std::span<const BinaryProfile> eval,
                 std::span<const BinaryProfile> synthetic, size_t n, uint64_t seed, unsigned threads = 1);

// Adversarial accuracy with leave-self-out nearest neighbours; |a| == |b| required.
double adversarial_accuracy(std::span<const BinaryProfile> a, std::span<const BinaryProfile> b, unsigned threads = 1);

struct MembershipResult {
  double score = 0.0;
  double best_f1 = 0.0;
  double baseline_f1 = 0.0;
  size_t best_threshold = 0;
};

// Targets are classified as members iff their nearest synthetic distance <= tau.
MembershipResult membership_inference(std::span<const BinaryProfile> targets, std::span<const int> is_member,
                                      std::span<const BinaryProfile> synthetic, unsigned threads = 1);

struct AttributeResult {
  double score = 0.0;
  std::vector<double> accuracy;  // per sensitive attribute
  std::vector<double> baseline;
  std::vector<double> weights;
};

AttributeResult attribute_inference(std::span<const BinaryProfile> targets, std::span<const BinaryProfile> synthetic,
                                    std::span<const size_t> key_attrs, std::span<const size_t> sensitive_attrs,
                                    unsigned threads = 1);

struct IdentityResult {
  double score = 0.0;
  size_t disclosures = 0;
};

// Synthetic record r discloses when exactly one population record matches it on every
// quasi-identifier and at least match_tolerance of the remaining features agree.
IdentityResult identity_disclosure(std::span<const BinaryProfile> population, std::span<const BinaryProfile> synthetic,
                                   std::span<const size_t> quasi_identifiers, double match_tolerance);

inline constexpr double kPrivacyRiskThreshold = 0.333;

struct PrivacyConfig {
  size_t sample_size = 1000;
  uint64_t seed = 0;
  double match_tolerance = 0.9;
  // Feature names as produced by ProfileSchema::feature_names(). Defaults when empty:
  // sensitive = the concepts whose train prevalence is closest to one half, keys = every
  // non-sensitive feature, quasi-identifiers = the demographic features.
  std::vector<std::string> key_attributes;
  std::vector<std::string> sensitive_attributes;
  std::vector<std::string> quasi_identifiers;
  size_t default_sensitive_count = 10;

  void validate() const;
  static PrivacyConfig load(const std::filesystem::path& path);
  static PrivacyConfig parse(const std::string& yaml_text, const std::string& source);
};

struct PrivacyReport {
  double nnaa = 0.0;
  MembershipResult membership;
  AttributeResult attribute;
  IdentityResult identity;

  bool pass() const;
  std::string to_csv() const;
};

struct ResolvedAttributes {
  std::vector<size_t> keys;
  std::vector<size_t> sensitive;
  std::vector<size_t> quasi_identifiers;
};

ResolvedAttributes resolve_attributes(const PrivacyConfig& cfg, const ProfileSchema& schema,
                                      std::span<const BinaryProfile> train);

// All four attacks. Membership targets are drawn half from train, half from eval.
PrivacyReport run_privacy_audit(std::span<const BinaryProfile> train, std::span<const BinaryProfile> eval,
                                std::span<const BinaryProfile> synthetic, const ResolvedAttributes& attrs,
                                const PrivacyConfig& cfg, unsigned threads = 1);

}  // namespace ehrgen
