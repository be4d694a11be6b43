#include "fixtures/hospital.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"
#include "common/rng.hpp"

namespace ehrgen {

namespace {

// A chronic condition with the drugs and procedures that tend to accompany it.
struct Profile {
  int64_t condition;
  std::vector<int64_t> drugs;
  std::vector<int64_t> procedures;
  double weight;
};

const std::vector<Profile>& profiles() {
  static const std::vector<Profile> p = {
      {hospital::kDiabetes, {hospital::kMetformin, 1560171}, {4184637}, 3.0},
      {316866, {1308216, 974166}, {4151504}, 4.0},    // hypertension
      {432867, {1539403}, {4019097}, 2.5},            // hyperlipidemia
      {255573, {1154343, 1149380}, {4133840}, 1.5},   // COPD
      {317576, {1112807, 1322184}, {4336464}, 1.5},   // coronary disease
      {313217, {1310149}, {4087381}, 1.0},            // atrial fibrillation
      {440383, {739138, 797617}, {4121437}, 1.5},     // depression
      {317009, {1154343}, {4133840}, 1.5},            // asthma
      {46271022, {1301125}, {4144111}, 1.0},          // chronic kidney disease
      {4063381, {703547}, {4030840}, 0.8},            // HIV-like chronic infection
  };
  return p;
}

const std::vector<int64_t>& acute_conditions() {
  static const std::vector<int64_t> c = {260139, 257012, 4112343, 80180, 378253, 4329041, 437663, 75860,
                                         140673, 134057, 195588,  81151, 441408, 436962,  4170143, 433316};
  return c;
}

const std::vector<int64_t>& acute_drugs() {
  static const std::vector<int64_t> d = {1713332, 1125315, 1177480, 19078461, 1797513, 1124300};
  return d;
}

const std::vector<int64_t>& inpatient_procedures() {
  static const std::vector<int64_t> p = {4163872, 2514406, 4230911, 4052536};
  return p;
}

const std::vector<int64_t>& discharge_concepts() {
  static const std::vector<int64_t> d = {8536, 8863, 8717};
  return d;
}

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

std::vector<std::pair<int64_t, int64_t>> hospital_ancestry() {
  return {
      {hospital::kDiabetesParent, hospital::kDiabetes},
      {hospital::kDiabetesParent, 4193704},
      {4193704, 4030518},
      {316866, 320128},
      {317576, 4329847},
      {4329847, 312327},
      {hospital::kInpatient, 262},
  };
}

std::vector<PatientRecord> generate_hospital(const HospitalConfig& cfg) {
  if (cfg.min_visits < 1 || cfg.max_visits < cfg.min_visits)
    throw ValidationError("hospital: visit count range is empty");
  if (cfg.first_year_max < cfg.first_year_min) throw ValidationError("hospital: first-year range is empty");
  std::vector<double> weights;
  for (const auto& p : profiles()) weights.push_back(p.weight);

  std::vector<PatientRecord> out;
  out.reserve(cfg.n_patients);
  for (size_t k = 0; k < cfg.n_patients; ++k) {
    Rng rng = make_rng(cfg.seed, {0x686f7370, k});
    auto u = [&] { return uniform01(rng); };
    PatientRecord r;
    r.person_id = std::to_string(k + 1);
    r.gender_concept = u() < 0.52 ? hospital::kFemale : hospital::kMale;
    const double race = u();
    r.race_concept = race < 0.6 ? 8527 : race < 0.8 ? 8516 : race < 0.92 ? 8515 : 8657;

    const int first_year = cfg.distinct_start_years
                               ? cfg.first_year_min + static_cast<int>(k)
                               : std::uniform_int_distribution<int>(cfg.first_year_min, cfg.first_year_max)(rng);
    const int age = std::clamp(static_cast<int>(std::lround(std::normal_distribution<double>(55, 16)(rng))), 18, 95);
    r.birth_year = first_year - age;

    // Chronic conditions accumulate with age.
    std::discrete_distribution<size_t> choose(weights.begin(), weights.end());
    std::vector<size_t> chronic;
    const int n_chronic = std::min<int>(3, static_cast<int>(u() * (1.0 + age / 30.0)));
    for (int i = 0; i < n_chronic; ++i) {
      size_t c = choose(rng);
      if (std::find(chronic.begin(), chronic.end(), c) == chronic.end()) chronic.push_back(c);
    }

    const int n_visits = std::uniform_int_distribution<int>(cfg.min_visits, cfg.max_visits)(rng);
    Day cursor = Day::from_ymd(first_year, 1 + static_cast<unsigned>(u() * 12), 1 + static_cast<unsigned>(u() * 28));
    for (int vi = 0; vi < n_visits; ++vi) {
      if (vi > 0) {
        int32_t gap = u() < cfg.long_gap_rate
                          ? 1081 + static_cast<int32_t>(u() * 600)
                          : static_cast<int32_t>(std::exponential_distribution<double>(1.0 / cfg.mean_gap_days)(rng));
        cursor = cursor + std::min<int32_t>(gap, 3000);
      }
      Visit v;
      const double t = u();
      const bool inpatient = t < cfg.inpatient_rate;
      v.visit_concept_id = inpatient ? hospital::kInpatient
                           : t < cfg.inpatient_rate + cfg.emergency_rate ? hospital::kEmergency
                                                                         : hospital::kOutpatient;
      v.start = cursor;
      const int32_t length = inpatient ? 1 + static_cast<int32_t>(std::exponential_distribution<double>(1.0 / 4)(rng))
                                       : 0;
      v.end = cursor + std::min<int32_t>(length, 30);
      if (inpatient) v.discharge_concept_id = pick(discharge_concepts(), rng);

      auto add = [&](Domain d, int64_t c, int32_t offset) { v.events.push_back({c, d, v.start + offset}); };
      for (size_t c : chronic) {
        const auto& p = profiles()[c];
        if (u() < 0.6) add(Domain::Condition, p.condition, 0);
        if (u() < 0.5) add(Domain::Drug, pick(p.drugs, rng), 0);
        if (u() < 0.15) add(Domain::Procedure, pick(p.procedures, rng), 0);
      }
      if (v.visit_concept_id != hospital::kOutpatient || u() < 0.4) {
        const int64_t acute = pick(acute_conditions(), rng);
        add(Domain::Condition, acute, 0);
        if (u() < 0.5) add(Domain::Drug, pick(acute_drugs(), rng), 0);
      }
      if (inpatient) {
        const int32_t span = v.end - v.start;
        add(Domain::Procedure, pick(inpatient_procedures(), rng), span > 0 ? 1 : 0);
        if (span > 1 && u() < 0.5) add(Domain::Drug, pick(acute_drugs(), rng), span);
      }
      if (v.events.empty()) add(Domain::Condition, pick(acute_conditions(), rng), 0);
      std::sort(v.events.begin(), v.events.end(), event_less);
      v.events.erase(std::unique(v.events.begin(), v.events.end()), v.events.end());
      cursor = v.end;
      r.visits.push_back(std::move(v));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ehrgen
