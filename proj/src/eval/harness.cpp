#include "eval/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "common/config.hpp"
#include "common/csv.hpp"
#include "common/errors.hpp"
#include "common/parallel.hpp"

namespace ehrgen {

namespace {
constexpr int64_t kFemaleGenderConcept = 8532;
}

ConceptIndex ConceptIndex::build(std::span<const PatientRecord> records) {
  std::set<int64_t> all;
  for (const auto& r : records)
    for (const auto& v : r.visits)
      for (const auto& e : v.events) all.insert(e.concept_id);
  ConceptIndex ix;
  ix.concepts_.assign(all.begin(), all.end());
  for (size_t i = 0; i < ix.concepts_.size(); ++i) ix.index_[ix.concepts_[i]] = i;
  return ix;
}

std::optional<size_t> ConceptIndex::column(int64_t concept_id) const {
  auto it = index_.find(concept_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> bow_features(const PatientRecord& record, const ConceptIndex& index, Day from, Day to) {
  std::vector<double> x(index.size(), 0.0);
  for (const auto& v : record.visits)
    for (const auto& e : v.events)
      if (e.date >= from && e.date <= to)
        if (auto c = index.column(e.concept_id)) x[*c] += 1.0;
  return x;
}

double LogisticModel::decision(std::span<const double> x) const {
  double z = bias;
  for (size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
  return z;
}

double LogisticModel::probability(std::span<const double> x) const { return 1.0 / (1.0 + std::exp(-decision(x))); }

namespace {

// log(1 + exp(-m)) without overflow.
double softplus_neg(double m) { return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

}  // namespace

LogisticModel fit_logistic(const std::vector<std::vector<double>>& X, std::span<const int> y,
                           const LogisticOptions& opts) {
  const size_t n = X.size();
  if (n == 0 || y.size() != n) throw ValidationError("fit_logistic: need one label per example");
  const size_t d = X[0].size();
  size_t pos = 0;
  for (size_t i = 0; i < n; ++i) {
    if (X[i].size() != d) throw ValidationError("fit_logistic: ragged feature matrix");
    if (y[i] != 0 && y[i] != 1) throw ValidationError("fit_logistic: labels must be 0 or 1");
    pos += y[i];
  }
  if (pos == 0 || pos == n) throw ValidationError("fit_logistic: both classes are required");

  // theta = (w_0..w_{d-1}, b)
  const size_t p = d + 1;
  auto objective = [&](const std::vector<double>& th, std::vector<double>* grad) {
    double loss = 0.0;
    if (grad) grad->assign(p, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double z = th[d];
      for (size_t j = 0; j < d; ++j) z += th[j] * X[i][j];
      const double s = y[i] ? 1.0 : -1.0;
      loss += softplus_neg(s * z);
      if (grad) {
        const double g = -s / (1.0 + std::exp(s * z));  // d/dz log(1 + exp(-s z))
        for (size_t j = 0; j < d; ++j) (*grad)[j] += g * X[i][j];
        (*grad)[d] += g;
      }
    }
    loss /= static_cast<double>(n);
    double reg = 0.0;
    for (size_t j = 0; j < d; ++j) reg += th[j] * th[j];
    loss += 0.5 * opts.l2 * reg;
    if (grad) {
      for (double& g : *grad) g /= static_cast<double>(n);
      for (size_t j = 0; j < d; ++j) (*grad)[j] += opts.l2 * th[j];
    }
    return loss;
  };
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };

  std::vector<double> th(p, 0.0), g, th_prev, g_prev, trial(p), g_trial;
  double f = objective(th, &g);
  double step = 1.0;
  LogisticModel m;
  size_t it = 0;
  for (; it < opts.max_iter && norm(g) >= opts.tolerance; ++it) {
    if (!th_prev.empty()) {
      double ss = 0.0, sy = 0.0;
      for (size_t j = 0; j < p; ++j) {
        const double sj = th[j] - th_prev[j], yj = g[j] - g_prev[j];
        ss += sj * sj;
        sy += sj * yj;
      }
      if (sy > 0) step = ss / sy;
    }
    const double gg = norm(g) * norm(g);
    double f_trial = 0.0;
    for (int back = 0; back < 60; ++back) {
      for (size_t j = 0; j < p; ++j) trial[j] = th[j] - step * g[j];
      f_trial = objective(trial, nullptr);
      if (f_trial <= f - 1e-4 * step * gg) break;
      step *= 0.5;
    }
    th_prev = th;
    g_prev = g;
    th = trial;
    f = objective(th, &g);
  }
  m.weights.assign(th.begin(), th.begin() + static_cast<std::ptrdiff_t>(d));
  m.bias = th[d];
  m.iterations = it;
  m.grad_norm = norm(g);
  return m;
}

ProbeResult probe_features(const std::vector<std::vector<double>>& x_train, std::span<const int> y_train,
                           const std::vector<std::vector<double>>& x_test, std::span<const int> y_test,
                           const LogisticOptions& opts, size_t n_bootstrap, uint64_t seed) {
  ProbeResult r;
  r.classifier = fit_logistic(x_train, y_train, opts);
  std::vector<double> scores;
  for (const auto& x : x_test) scores.push_back(r.classifier.decision(x));
  r.metrics = evaluate_scores(scores, y_test, n_bootstrap, seed);
  return r;
}

ProbeResult linear_probe(const Model& model, std::span<const ProbeExample> train, std::span<const ProbeExample> test,
                         const LogisticOptions& opts, size_t n_bootstrap, uint64_t seed, unsigned threads) {
  auto represent = [&](std::span<const ProbeExample> ex, std::vector<std::vector<double>>& x, std::vector<int>& y) {
    x.resize(ex.size());
    parallel_for(ex.size(), threads, [&](size_t i) { x[i] = extract_representation(model, ex[i].ids); });
    for (const auto& e : ex) y.push_back(e.label);
  };
  std::vector<std::vector<double>> xtr, xte;
  std::vector<int> ytr, yte;
  represent(train, xtr, ytr);
  represent(test, xte, yte);
  return probe_features(xtr, ytr, xte, yte, opts, n_bootstrap, seed);
}

std::vector<PrevalenceRow> prevalence_report(const EventTables& real, const EventTables& synthetic,
                                             const CodecConfig& codec) {
  if (real.persons.empty() || synthetic.persons.empty()) throw ValidationError("prevalence_report: empty tables");
  struct Population {
    std::map<std::string, std::set<std::pair<Domain, int64_t>>> by_person;
    std::set<std::string> full, female, hospitalized;
  };
  auto summarize = [&](const EventTables& t) {
    Population p;
    for (const auto& r : t.persons) {
      p.full.insert(r.person_id);
      if (r.gender_concept_id == kFemaleGenderConcept) p.female.insert(r.person_id);
    }
    for (const auto& v : t.visits)
      if (codec.is_inpatient(v.visit_concept_id)) p.hospitalized.insert(v.person_id);
    for (const auto& e : t.events) p.by_person[e.person_id].insert({e.domain, e.concept_id});
    return p;
  };
  const Population a = summarize(real), b = summarize(synthetic);

  auto prevalences = [](const Population& p, const std::set<std::string>& members) {
    std::map<std::pair<Domain, int64_t>, double> out;
    for (const auto& id : members) {
      auto it = p.by_person.find(id);
      if (it == p.by_person.end()) continue;
      for (const auto& c : it->second) out[c] += 1.0;
    }
    for (auto& [c, n] : out) n /= static_cast<double>(members.size());
    return out;
  };
  std::vector<PrevalenceRow> rows;
  const std::pair<const char*, std::set<std::string> Population::*> pops[] = {
      {"full", &Population::full}, {"female", &Population::female}, {"hospitalized", &Population::hospitalized}};
  for (const auto& [name, member] : pops) {
    if ((a.*member).empty() && (b.*member).empty()) continue;
    auto pa = prevalences(a, a.*member), pb = prevalences(b, b.*member);
    std::map<std::pair<Domain, int64_t>, std::pair<double, double>> merged;
    for (const auto& [c, v] : pa) merged[c].first = v;
    for (const auto& [c, v] : pb) merged[c].second = v;
    for (const auto& [c, v] : merged) rows.push_back({name, c.first, c.second, v.first, v.second});
  }
  return rows;
}

std::string prevalence_csv(const std::vector<PrevalenceRow>& rows) {
  std::ostringstream o;
  o.precision(8);
  o << "population,domain,concept_id,real_prevalence,synthetic_prevalence\n";
  for (const auto& r : rows)
    o << r.population << ',' << domain_name(r.domain) << ',' << r.concept_id << ',' << r.real << ',' << r.synthetic
      << '\n';
  return o.str();
}

void CohortSpec::validate() const {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw ValidationError("cohort '" + name + "': " + field + " " + why);
  };
  if (index_concepts.empty()) fail("index_concepts", "must not be empty");
  if (lookback_days < 0) fail("lookback_days", "must be nonnegative");
  if (interval_days <= 0) fail("interval_days", "must be positive");
  if (repetitions < 0) fail("repetitions", "must be nonnegative");
  if (!outcome_concepts.empty() && outcome_window_days <= 0) fail("outcome_window_days", "must be positive");
}

CohortSpec CohortSpec::parse(const std::string& yaml_text, const std::string& source) {
  YAML::Node n = parse_yaml(yaml_text, source);
  check_keys(n,
             {"name", "index_concepts", "lookback_days", "outcome_concepts", "outcome_window_days", "interval_days",
              "repetitions"},
             source);
  CohortSpec c;
  c.name = yaml_get(n, "name", c.name, source);
  for (int64_t v : yaml_require<std::vector<int64_t>>(n, "index_concepts", source)) c.index_concepts.insert(v);
  c.lookback_days = yaml_get(n, "lookback_days", c.lookback_days, source);
  for (int64_t v : yaml_get(n, "outcome_concepts", std::vector<int64_t>{}, source)) c.outcome_concepts.insert(v);
  c.outcome_window_days = yaml_get(n, "outcome_window_days", c.outcome_window_days, source);
  c.interval_days = yaml_get(n, "interval_days", c.interval_days, source);
  c.repetitions = yaml_get(n, "repetitions", c.repetitions, source);
  c.validate();
  return c;
}

CohortSpec CohortSpec::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

namespace {

struct PersonTimeline {
  std::optional<Day> first_record;
  std::vector<Day> index_dates;  // sorted
  std::vector<Day> outcome_dates;
};

std::map<std::string, PersonTimeline> timelines(const EventTables& t, const CohortSpec& spec) {
  std::map<std::string, PersonTimeline> out;
  for (const auto& p : t.persons) out[p.person_id];
  auto note_first = [](PersonTimeline& pt, Day d) {
    if (!pt.first_record || d < *pt.first_record) pt.first_record = d;
  };
  for (const auto& v : t.visits) {
    auto& pt = out[v.person_id];
    note_first(pt, v.start_date);
    if (spec.outcome_concepts.count(v.visit_concept_id)) pt.outcome_dates.push_back(v.start_date);
  }
  for (const auto& e : t.events) {
    auto& pt = out[e.person_id];
    note_first(pt, e.date);
    if (spec.index_concepts.count(e.concept_id)) pt.index_dates.push_back(e.date);
    if (spec.outcome_concepts.count(e.concept_id)) pt.outcome_dates.push_back(e.date);
  }
  for (auto& [id, pt] : out) {
    std::sort(pt.index_dates.begin(), pt.index_dates.end());
    std::sort(pt.outcome_dates.begin(), pt.outcome_dates.end());
  }
  return out;
}

}  // namespace

PathwayResult pathway_cohort(const EventTables& tables, const CohortSpec& spec) {
  spec.validate();
  PathwayResult r;
  auto people = timelines(tables, spec);
  r.persons = people.size();
  for (const auto& [id, pt] : people) {
    if (pt.index_dates.empty()) continue;
    const Day first = pt.index_dates.front();
    if (first - *pt.first_record < spec.lookback_days) continue;
    bool ok = true;
    for (int64_t k = 0; k < spec.repetitions && ok; ++k) {
      const Day lo = first + static_cast<int32_t>(k * spec.interval_days);
      const Day hi = lo + static_cast<int32_t>(spec.interval_days);
      auto it = std::lower_bound(pt.index_dates.begin(), pt.index_dates.end(), lo);
      ok = it != pt.index_dates.end() && *it < hi;
    }
    if (ok) r.members.push_back(id);
  }
  r.prevalence = r.persons ? static_cast<double>(r.members.size()) / static_cast<double>(r.persons) : 0.0;
  return r;
}

std::vector<LabeledIndex> outcome_cohort(const EventTables& tables, const CohortSpec& spec) {
  spec.validate();
  if (spec.outcome_concepts.empty()) throw ValidationError("cohort '" + spec.name + "': outcome_concepts required");
  std::vector<LabeledIndex> out;
  for (const auto& [id, pt] : timelines(tables, spec)) {
    if (pt.index_dates.empty()) continue;
    const Day index = pt.index_dates.front();
    if (index - *pt.first_record < spec.lookback_days) continue;
    const Day until = index + static_cast<int32_t>(spec.outcome_window_days);
    auto it = std::upper_bound(pt.outcome_dates.begin(), pt.outcome_dates.end(), index);
    out.push_back({id, index, it != pt.outcome_dates.end() && *it <= until ? 1 : 0});
  }
  return out;
}

std::vector<LabeledIndex> read_cohort(const std::filesystem::path& path) {
  CsvTable t = CsvTable::read(path);
  const size_t p = t.column("person_id"), d = t.column("index_date"), l = t.column("label");
  std::vector<LabeledIndex> out;
  for (size_t i = 0; i < t.rows(); ++i) {
    const int64_t label = t.int_cell(i, l);
    if (label != 0 && label != 1) throw ValidationError(path.string() + ": label must be 0 or 1");
    out.push_back({t.cell(i, p), Day::parse(t.cell(i, d)), static_cast<int>(label)});
  }
  return out;
}

void write_cohort(const std::filesystem::path& path, const std::vector<LabeledIndex>& cohort) {
  std::ostringstream o;
  o << "person_id,index_date,label\n";
  for (const auto& c : cohort) o << c.person_id << ',' << c.index_date.iso() << ',' << c.label << '\n';
  write_file_atomic(path, o.str());
}

TokenSequence prefix_sequence(const PatientRecord& record, Day index_date, const CodecConfig& codec) {
  PatientRecord r = record;
  r.visits.clear();
  for (const auto& v : record.visits) {
    if (v.start > index_date) continue;
    Visit c = v;
    c.events.erase(std::remove_if(c.events.begin(), c.events.end(), [&](const auto& e) { return e.date > index_date; }),
                   c.events.end());
    c.end = std::min(c.end, index_date);
    r.visits.push_back(std::move(c));
  }
  if (r.visits.empty()) throw ValidationError("person " + record.person_id + " has no visits before the index date");
  TokenSequence s = encode_patient(r, codec);
  s.tokens.pop_back();
  s.att_days.pop_back();
  return s;
}

}  // namespace ehrgen
