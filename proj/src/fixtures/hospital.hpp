#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "codec/records.hpp"

namespace ehrgen {

// Parameters of the synthetic-hospital generator used for demos, tests and the CLI `synth`.
struct HospitalConfig {
  size_t n_patients = 500;
  uint64_t seed = 0;
  int min_visits = 2;
  int max_visits = 8;
  double mean_gap_days = 150.0;
  double long_gap_rate = 0.03;   // chance a gap exceeds the ATT range
  double inpatient_rate = 0.15;
  double emergency_rate = 0.15;
  int first_year_min = 2005;
  int first_year_max = 2015;
  // Patient k starts in first_year_min + k (makes every demographic prefix unique).
  bool distinct_start_years = false;
};

std::vector<PatientRecord> generate_hospital(const HospitalConfig& cfg);

// (ancestor, descendant) pairs of the fixture's concept hierarchy.
std::vector<std::pair<int64_t, int64_t>> hospital_ancestry();

namespace hospital {
inline constexpr int64_t kInpatient = 9201;
inline constexpr int64_t kOutpatient = 9202;
inline constexpr int64_t kEmergency = 9203;
inline constexpr int64_t kFemale = 8532;
inline constexpr int64_t kMale = 8507;
inline constexpr int64_t kMetformin = 1503297;
inline constexpr int64_t kDiabetes = 201826;
inline constexpr int64_t kDiabetesParent = 201820;
}  // namespace hospital

}  // namespace ehrgen
