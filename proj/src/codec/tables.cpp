#include "codec/tables.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>

#include "common/csv.hpp"
#include "common/errors.hpp"

namespace ehrgen {

EventTables EventTables::load(const std::filesystem::path& persons_path, const std::filesystem::path& visits_path,
                              const std::filesystem::path& events_path) {
  EventTables t;
  auto persons = CsvTable::read(persons_path);
  {
    size_t pid = persons.column("person_id"), by = persons.column("birth_year"),
           g = persons.column("gender_concept_id"), r = persons.column("race_concept_id");
    for (size_t i = 0; i < persons.rows(); ++i) {
      t.persons.push_back(PersonRow{persons.cell(i, pid), static_cast<int>(persons.int_cell(i, by)),
                                    persons.int_cell(i, g), persons.int_cell(i, r)});
    }
  }
  auto visits = CsvTable::read(visits_path);
  {
    size_t vid = visits.column("visit_id"), pid = visits.column("person_id"), vc = visits.column("visit_concept_id"),
           sd = visits.column("start_date"), ed = visits.column("end_date"),
           dc = visits.column("discharge_concept_id");
    for (size_t i = 0; i < visits.rows(); ++i) {
      VisitRow row;
      row.visit_id = visits.cell(i, vid);
      row.person_id = visits.cell(i, pid);
      row.visit_concept_id = visits.int_cell(i, vc);
      try {
        row.start_date = Day::parse(visits.cell(i, sd));
        row.end_date = Day::parse(visits.cell(i, ed));
      } catch (const ValidationError& e) {
        throw ValidationError(visits.source() + " row " + std::to_string(i + 2) + ": " + e.what());
      }
      if (!visits.cell(i, dc).empty()) row.discharge_concept_id = visits.int_cell(i, dc);
      t.visits.push_back(std::move(row));
    }
  }
  auto events = CsvTable::read(events_path);
  {
    size_t pid = events.column("person_id"), vid = events.column("visit_id"), dom = events.column("domain"),
           cid = events.column("concept_id"), dt = events.column("date");
    for (size_t i = 0; i < events.rows(); ++i) {
      EventRow row;
      row.person_id = events.cell(i, pid);
      row.visit_id = events.cell(i, vid);
      try {
        row.domain = parse_domain(events.cell(i, dom));
        row.date = Day::parse(events.cell(i, dt));
      } catch (const ValidationError& e) {
        throw ValidationError(events.source() + " row " + std::to_string(i + 2) + ": " + e.what());
      }
      row.concept_id = events.int_cell(i, cid);
      t.events.push_back(std::move(row));
    }
  }
  return t;
}

void EventTables::save(const std::filesystem::path& persons_path, const std::filesystem::path& visits_path,
                       const std::filesystem::path& events_path) const {
  std::ostringstream p, v, e;
  p << "person_id,birth_year,gender_concept_id,race_concept_id\n";
  for (const auto& r : persons)
    p << r.person_id << ',' << r.birth_year << ',' << r.gender_concept_id << ',' << r.race_concept_id << '\n';
  v << "visit_id,person_id,visit_concept_id,start_date,end_date,discharge_concept_id\n";
  for (const auto& r : visits) {
    v << r.visit_id << ',' << r.person_id << ',' << r.visit_concept_id << ',' << r.start_date.iso() << ','
      << r.end_date.iso() << ',';
    if (r.discharge_concept_id) v << *r.discharge_concept_id;
    v << '\n';
  }
  e << "person_id,visit_id,domain,concept_id,date\n";
  for (const auto& r : events)
    e << r.person_id << ',' << r.visit_id << ',' << domain_name(r.domain) << ',' << r.concept_id << ',' << r.date.iso()
      << '\n';
  write_file_atomic(persons_path, p.str());
  write_file_atomic(visits_path, v.str());
  write_file_atomic(events_path, e.str());
}

std::vector<PatientRecord> records_from_tables(const EventTables& t, const CodecConfig& cfg, IngestReport* report) {
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  std::unordered_map<std::string, size_t> visit_index;
  std::unordered_map<std::string, std::vector<size_t>> visits_by_person;
  for (size_t i = 0; i < t.visits.size(); ++i) {
    const auto& v = t.visits[i];
    if (!visit_index.emplace(v.visit_id, i).second) throw ValidationError("duplicate visit_id " + v.visit_id);
    visits_by_person[v.person_id].push_back(i);
  }
  std::vector<std::vector<ClinicalEvent>> events_by_visit(t.visits.size());
  for (const auto& e : t.events) {
    if (e.concept_id == 0) {
      ++rep.unknown_concept_events;
      continue;
    }
    auto it = visit_index.find(e.visit_id);
    if (it == visit_index.end()) throw ValidationError("event references unknown visit_id " + e.visit_id);
    if (t.visits[it->second].person_id != e.person_id) {
      throw ValidationError("event person_id " + e.person_id + " does not match visit " + e.visit_id);
    }
    events_by_visit[it->second].push_back(ClinicalEvent{e.concept_id, e.domain, e.date});
  }

  std::set<std::string> seen;
  std::vector<PatientRecord> out;
  for (const auto& p : t.persons) {
    if (!seen.insert(p.person_id).second) throw ValidationError("duplicate person_id " + p.person_id);
    auto it = visits_by_person.find(p.person_id);
    if (it == visits_by_person.end()) {
      ++rep.persons_without_visits;
      continue;
    }
    PatientRecord r{p.person_id, p.birth_year, p.gender_concept_id, p.race_concept_id, {}};
    for (size_t vi : it->second) {
      const auto& row = t.visits[vi];
      Visit v{row.visit_concept_id, row.start_date, row.end_date, row.discharge_concept_id, events_by_visit[vi]};
      const bool inpatient = cfg.is_inpatient(v.visit_concept_id);
      if (inpatient && !v.discharge_concept_id) {
        v.discharge_concept_id = 0;
        ++rep.filled_discharge;
      } else if (!inpatient && v.discharge_concept_id) {
        v.discharge_concept_id.reset();
        ++rep.dropped_discharge;
      }
      r.visits.push_back(std::move(v));
    }
    out.push_back(canonicalize(std::move(r)));
  }
  return out;
}

EventTables tables_from_records(const std::vector<PatientRecord>& records) {
  EventTables t;
  for (const auto& r : records) {
    t.persons.push_back(PersonRow{r.person_id, r.birth_year, r.gender_concept, r.race_concept});
    for (size_t i = 0; i < r.visits.size(); ++i) {
      const auto& v = r.visits[i];
      std::string vid = r.person_id + "-" + std::to_string(i + 1);
      t.visits.push_back(VisitRow{vid, r.person_id, v.visit_concept_id, v.start, v.end, v.discharge_concept_id});
      for (const auto& e : v.events) t.events.push_back(EventRow{r.person_id, vid, e.domain, e.concept_id, e.date});
    }
  }
  return t;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

std::vector<SequenceFileRow> read_sequence_file(const std::filesystem::path& path) {
  auto table = CsvTable::read(path, '\t');
  size_t pid = table.column("person_id"), tok = table.column("tokens");
  std::vector<SequenceFileRow> rows;
  for (size_t i = 0; i < table.rows(); ++i) {
    SequenceFileRow row;
    row.sequence.person_id = table.cell(i, pid);
    row.sequence.tokens = split_tokens(table.cell(i, tok));
    for (size_t c = 0; c < table.header().size(); ++c)
      if (c != pid && c != tok) row.extra[table.header()[c]] = table.cell(i, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sequence_file(const std::filesystem::path& path, const std::vector<SequenceFileRow>& rows) {
  std::vector<std::string> extra_cols;
  if (!rows.empty())
    for (const auto& [k, v] : rows.front().extra) extra_cols.push_back(k);
  std::ostringstream out;
  out << "person_id";
  for (const auto& c : extra_cols) out << '\t' << c;
  out << "\ttokens\n";
  for (const auto& r : rows) {
    out << r.sequence.person_id;
    for (const auto& c : extra_cols) {
      auto it = r.extra.find(c);
      out << '\t' << (it == r.extra.end() ? "" : it->second);
    }
    out << '\t' << join_tokens(r.sequence.tokens) << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace ehrgen
