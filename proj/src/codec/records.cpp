#include "codec/records.hpp"

#include <algorithm>

#include "common/errors.hpp"

namespace ehrgen {

void validate_record(const PatientRecord& r, const CodecConfig& cfg) {
  auto fail = [&](const std::string& what) { throw ValidationError("person " + r.person_id + ": " + what); };
  if (r.visits.empty()) fail("no visits");
  for (size_t i = 0; i < r.visits.size(); ++i) {
    const Visit& v = r.visits[i];
    const std::string where = "visit " + std::to_string(i);
    if (v.end < v.start) fail(where + " ends before it starts");
    if (i > 0 && v.start < r.visits[i - 1].start) fail(where + " starts before the previous visit");
    if (cfg.is_inpatient(v.visit_concept_id) != v.discharge_concept_id.has_value()) {
      fail(where + (v.discharge_concept_id ? " has a discharge concept but is not an inpatient visit"
                                           : " is an inpatient visit without a discharge concept"));
    }
    for (const auto& e : v.events) {
      if (e.concept_id == 0) fail(where + " contains concept_id 0");
      if (e.date < v.start || e.date > v.end) {
        fail(where + ": event " + std::to_string(e.concept_id) + " on " + e.date.iso() + " outside visit span " +
             v.start.iso() + ".." + v.end.iso());
      }
    }
  }
  int age = r.visits.front().start.year() - r.birth_year;
  if (age < 0) fail("first visit precedes birth year");
}

PatientRecord canonicalize(PatientRecord r) {
  std::stable_sort(r.visits.begin(), r.visits.end(), [](const Visit& a, const Visit& b) { return a.start < b.start; });
  for (auto& v : r.visits) std::sort(v.events.begin(), v.events.end(), event_less);
  return r;
}

}  // namespace ehrgen
