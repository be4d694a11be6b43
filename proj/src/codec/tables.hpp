#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "codec/codec.hpp"
#include "codec/records.hpp"

namespace ehrgen {

struct PersonRow {
  std::string person_id;
  int birth_year = 0;
  int64_t gender_concept_id = 0;
  int64_t race_concept_id = 0;
};

struct VisitRow {
  std::string visit_id;
  std::string person_id;
  int64_t visit_concept_id = 0;
  Day start_date;
  Day end_date;
  std::optional<int64_t> discharge_concept_id;
};

struct EventRow {
  std::string person_id;
  std::string visit_id;
  Domain domain = Domain::Condition;
  int64_t concept_id = 0;
  Day date;
};

// Flat relational form used for ingestion, synthetic output, cohorts and audits.
struct EventTables {
  std::vector<PersonRow> persons;
  std::vector<VisitRow> visits;
  std::vector<EventRow> events;

  static EventTables load(const std::filesystem::path& persons, const std::filesystem::path& visits,
                          const std::filesystem::path& events);
  void save(const std::filesystem::path& persons, const std::filesystem::path& visits,
            const std::filesystem::path& events) const;
};

struct IngestReport {
  size_t persons_without_visits = 0;
  size_t unknown_concept_events = 0;  // concept_id 0, dropped
  size_t filled_discharge = 0;        // inpatient visits missing a discharge concept
  size_t dropped_discharge = 0;       // discharge on non-inpatient visits
};

// Groups rows into canonical PatientRecords in person table order.
std::vector<PatientRecord> records_from_tables(const EventTables& tables, const CodecConfig& cfg,
                                               IngestReport* report = nullptr);
EventTables tables_from_records(const std::vector<PatientRecord>& records);

// Sequence files: TSV with a header holding at least person_id and tokens (space separated).
struct SequenceFileRow {
  TokenSequence sequence;
  std::map<std::string, std::string> extra;  // provenance columns, if any
};
std::vector<SequenceFileRow> read_sequence_file(const std::filesystem::path& path);
void write_sequence_file(const std::filesystem::path& path, const std::vector<SequenceFileRow>& rows);

std::vector<std::string> split_tokens(std::string_view text);
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace ehrgen
