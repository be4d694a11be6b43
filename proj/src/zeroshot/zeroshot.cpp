#include "zeroshot/zeroshot.hpp"

#include <deque>

#include "common/config.hpp"
#include "common/csv.hpp"
#include "common/errors.hpp"
#include "common/parallel.hpp"

namespace ehrgen {

void TaskConfig::validate() const {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw ValidationError("task '" + task_name + "': " + field + " " + why);
  };
  if (task_name.empty()) fail("task_name", "is required");
  if (outcome_events.empty()) fail("outcome_events", "must not be empty");
  if (prediction_window_start < 0) fail("prediction_window_start", "must be nonnegative");
  if (prediction_window_end <= prediction_window_start) fail("prediction_window_end", "must exceed the window start");
  if (max_new_tokens == 0) fail("max_new_tokens", "must be positive");
  if (n_simulations == 0) fail("n_simulations", "must be positive");
}

TaskConfig TaskConfig::parse(const std::string& yaml_text, const std::string& source) {
  YAML::Node n = parse_yaml(yaml_text, source);
  check_keys(n,
             {"task_name", "outcome_events", "include_descendants", "prediction_window_start", "prediction_window_end",
              "max_new_tokens", "n_simulations"},
             source);
  TaskConfig t;
  t.task_name = yaml_require<std::string>(n, "task_name", source);
  for (const auto& s : yaml_require<std::vector<std::string>>(n, "outcome_events", source))
    t.outcome_events.push_back(parse_int(s, source + ": outcome_events entry"));
  t.include_descendants = yaml_get(n, "include_descendants", false, source);
  t.prediction_window_start = yaml_require<int64_t>(n, "prediction_window_start", source);
  t.prediction_window_end = yaml_require<int64_t>(n, "prediction_window_end", source);
  t.max_new_tokens = yaml_get(n, "max_new_tokens", t.max_new_tokens, source);
  t.n_simulations = yaml_get(n, "n_simulations", t.n_simulations, source);
  t.validate();
  return t;
}

TaskConfig TaskConfig::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

ConceptAncestry ConceptAncestry::load(const std::filesystem::path& path) {
  CsvTable t = CsvTable::read(path);
  const size_t a = t.column("ancestor_id"), d = t.column("descendant_id");
  ConceptAncestry out;
  for (size_t i = 0; i < t.rows(); ++i) out.add(t.int_cell(i, a), t.int_cell(i, d));
  return out;
}

std::set<int64_t> ConceptAncestry::descendants(int64_t concept_id) const {
  std::set<int64_t> seen{concept_id};
  std::deque<int64_t> queue{concept_id};
  while (!queue.empty()) {
    int64_t c = queue.front();
    queue.pop_front();
    auto it = children_.find(c);
    if (it == children_.end()) continue;
    for (int64_t k : it->second)
      if (seen.insert(k).second) queue.push_back(k);
  }
  return seen;
}

std::set<int64_t> expand_outcomes(const TaskConfig& task, const ConceptAncestry* ancestry) {
  std::set<int64_t> out(task.outcome_events.begin(), task.outcome_events.end());
  if (!task.include_descendants) return out;
  if (!ancestry) throw ValidationError("task '" + task.task_name + "' includes descendants but no ancestry was given");
  for (int64_t c : task.outcome_events) {
    auto d = ancestry->descendants(c);
    out.insert(d.begin(), d.end());
  }
  return out;
}

std::vector<TokenMeaning> token_meanings(const Vocabulary& vocab, const std::set<int64_t>& outcomes) {
  std::vector<TokenMeaning> out(vocab.size());
  for (size_t i = 0; i < vocab.size(); ++i) {
    const TokenInfo& t = vocab.info(static_cast<TokenId>(i));
    auto& m = out[i];
    switch (t.cls) {
      case TokenClass::AttDay:
      case TokenClass::IntraAtt:
        m.days = t.value;
        break;
      case TokenClass::AttLongTerm:
        m.days = tokens::kLongTermNominalDays;
        break;
      case TokenClass::Concept:
      case TokenClass::VisitType:
        m.outcome = outcomes.count(t.value) > 0;
        break;
      case TokenClass::End:
        m.end = true;
        break;
      default:
        break;
    }
  }
  return out;
}

TrajectoryOutcome WindowTracker::step(TokenId token) {
  const TokenMeaning& m = (*meanings_).at(static_cast<size_t>(token));
  if (m.end) return TrajectoryOutcome::Censored;
  elapsed_ += m.days;
  if (elapsed_ > end_) return TrajectoryOutcome::Negative;
  if (m.outcome && elapsed_ >= start_) return TrajectoryOutcome::Positive;
  return TrajectoryOutcome::Pending;
}

TrajectoryOutcome classify_trajectory(std::span<const TokenId> generated, const std::vector<TokenMeaning>& meanings,
                                      int64_t window_start, int64_t window_end) {
  WindowTracker w(meanings, window_start, window_end);
  for (TokenId t : generated) {
    auto o = w.step(t);
    if (o != TrajectoryOutcome::Pending) return o;
  }
  return TrajectoryOutcome::Negative;
}

SimulationResult simulate_probability(const Decoder& primed, const std::vector<TokenMeaning>& meanings,
                                      const TaskConfig& task, uint64_t seed, const SamplingConfig& sampling) {
  task.validate();
  if (primed.length() == 0) throw ValidationError("simulate_probability: decoder has no prefix");
  if (meanings.size() != primed.vocab_size()) throw ValidationError("simulate_probability: meaning table size mismatch");
  SimulationResult r;
  const size_t cap = 4 * task.n_simulations;
  std::vector<double> logits;
  std::vector<TokenId> history;
  while (r.completed < task.n_simulations && r.attempts < cap) {
    Rng rng = make_rng(seed, {r.attempts});
    ++r.attempts;
    auto dec = primed.clone();
    WindowTracker tracker(meanings, task.prediction_window_start, task.prediction_window_end);
    TrajectoryOutcome outcome = TrajectoryOutcome::Pending;
    history.clear();
    for (size_t k = 0; k < task.max_new_tokens; ++k) {
      dec->logits(logits);
      TokenId next = sample_from(next_token_distribution(logits, history, sampling), rng);
      history.push_back(next);
      outcome = tracker.step(next);
      if (outcome != TrajectoryOutcome::Pending) break;
      if (k + 1 == task.max_new_tokens || dec->length() >= dec->max_length()) break;
      dec->feed(next);
    }
    if (outcome == TrajectoryOutcome::Censored) {
      ++r.censored;
      continue;
    }
    ++r.completed;
    r.positives += outcome == TrajectoryOutcome::Positive;
  }
  r.cap_reached = r.completed < task.n_simulations;
  r.probability = r.completed ? static_cast<double>(r.positives) / static_cast<double>(r.completed) : 0.0;
  return r;
}

TaskEvaluation evaluate_task(const Decoder& model, std::span<const CohortMember> cohort,
                             const std::vector<TokenMeaning>& meanings, const TaskConfig& task, uint64_t seed,
                             size_t n_bootstrap, unsigned threads, const SamplingConfig& sampling) {
  TaskEvaluation out;
  out.simulations.resize(cohort.size());
  parallel_for(cohort.size(), threads, [&](size_t i) {
    auto dec = model.clone();
    dec->reset();
    for (TokenId t : cohort[i].prefix) dec->feed(t);
    out.simulations[i] = simulate_probability(*dec, meanings, task, derive_seed(seed, {i}), sampling);
  });
  std::vector<double> scores;
  std::vector<int> labels;
  for (size_t i = 0; i < cohort.size(); ++i) {
    scores.push_back(out.simulations[i].probability);
    labels.push_back(cohort[i].label);
    out.capped += out.simulations[i].cap_reached;
  }
  out.metrics = evaluate_scores(scores, labels, n_bootstrap, seed);
  return out;
}

}  // namespace ehrgen
