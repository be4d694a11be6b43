#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "codec/tokens.hpp"
#include "common/date.hpp"

namespace ehrgen {

struct ClinicalEvent {
  int64_t concept_id = 0;
  Domain domain = Domain::Condition;
  Day date;

  bool operator==(const ClinicalEvent&) const = default;
};

// Canonical event order inside a visit.
inline bool event_less(const ClinicalEvent& a, const ClinicalEvent& b) {
  if (a.date != b.date) return a.date < b.date;
  if (a.domain != b.domain) return domain_rank(a.domain) < domain_rank(b.domain);
  return a.concept_id < b.concept_id;
}

struct Visit {
  int64_t visit_concept_id = 0;
  Day start;
  Day end;
  std::optional<int64_t> discharge_concept_id;
  std::vector<ClinicalEvent> events;

  bool operator==(const Visit&) const = default;
};

struct PatientRecord {
  std::string person_id;
  int birth_year = 0;
  int64_t gender_concept = 0;
  int64_t race_concept = 0;
  std::vector<Visit> visits;

  bool operator==(const PatientRecord&) const = default;
};

struct CodecConfig {
  // Emit i-D{n} tokens for elapsed days inside a visit.
  bool intra_visit_time = true;
  std::set<int64_t> inpatient_visit_concepts{9201, 262};

  bool is_inpatient(int64_t visit_concept) const { return inpatient_visit_concepts.count(visit_concept) > 0; }
};

// Throws ValidationError describing the first violated record invariant.
void validate_record(const PatientRecord& record, const CodecConfig& cfg);

// Events sorted canonically, visits by start date.
PatientRecord canonicalize(PatientRecord record);

}  // namespace ehrgen
