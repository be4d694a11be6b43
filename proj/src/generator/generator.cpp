#include "generator/generator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "common/config.hpp"
#include "common/csv.hpp"
#include "common/errors.hpp"
#include "common/parallel.hpp"
#include "common/stats.hpp"

namespace ehrgen {

std::vector<ExpertSpec> parse_experts(const std::string& yaml_text, const std::string& source) {
  YAML::Node root = parse_yaml(yaml_text, source);
  check_keys(root, {"experts"}, source);
  YAML::Node list = root["experts"];
  if (!list || !list.IsSequence() || list.size() == 0) throw ValidationError(source + ": 'experts' must be a nonempty list");
  std::vector<ExpertSpec> out;
  for (size_t i = 0; i < list.size(); ++i) {
    const YAML::Node n = list[i];
    const std::string where = source + " expert " + std::to_string(i);
    check_keys(n,
               {"name", "temperature", "top_k", "top_p", "repetition_penalty", "max_tokens", "min_tokens", "checkpoint",
                "seed", "count"},
               where);
    ExpertSpec e;
    auto& s = e.sampling;
    s.name = yaml_get(n, "name", "expert" + std::to_string(i), where);
    s.temperature = yaml_get(n, "temperature", s.temperature, where);
    s.top_k = yaml_get(n, "top_k", s.top_k, where);
    s.top_p = yaml_get(n, "top_p", s.top_p, where);
    s.repetition_penalty = yaml_get(n, "repetition_penalty", s.repetition_penalty, where);
    s.max_tokens = yaml_get(n, "max_tokens", s.max_tokens, where);
    s.min_tokens = yaml_get(n, "min_tokens", s.min_tokens, where);
    s.checkpoint = yaml_get(n, "checkpoint", s.checkpoint, where);
    s.seed = yaml_get(n, "seed", static_cast<uint64_t>(i), where);
    e.count = yaml_require<size_t>(n, "count", where);
    s.validate();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ExpertSpec> load_experts(const std::filesystem::path& path) {
  return parse_experts(read_file(path), path.string());
}

SyntheticPool generate_pool(std::span<const Expert> experts, const Vocabulary& vocab, unsigned threads) {
  if (experts.empty()) throw ValidationError("generate_pool: no experts");
  struct Job {
    size_t expert, index;
  };
  std::vector<Job> jobs;
  for (size_t e = 0; e < experts.size(); ++e) {
    if (!experts[e].decoder || !experts[e].prompts) throw ValidationError("generate_pool: expert without model");
    experts[e].spec.sampling.validate();
    for (size_t i = 0; i < experts[e].spec.count; ++i) jobs.push_back({e, i});
  }
  const TokenId end_id = vocab.end_id();
  std::vector<PoolEntry> results(jobs.size());
  parallel_for(jobs.size(), threads, [&](size_t j) {
    const Expert& ex = experts[jobs[j].expert];
    PoolEntry& out = results[j];
    out.expert = jobs[j].expert;
    out.index = jobs[j].index;
    out.seed = derive_seed(ex.spec.sampling.seed, {out.expert, out.index});
    Rng rng(out.seed);
    auto prefix = ex.prompts->sample(rng);
    std::vector<TokenId> prompt;
    for (const auto& t : prefix) prompt.push_back(vocab.id(t));
    auto decoder = ex.decoder->clone();
    decoder->reset();
    auto sampled = sample_sequence(*decoder, prompt, ex.spec.sampling, end_id, rng);
    out.sequence.person_id = "e" + std::to_string(out.expert) + "-" + std::to_string(out.index);
    out.sequence.tokens = vocab.texts(sampled.ids);
    out.hit_max_tokens = sampled.hit_max_tokens;
  });

  SyntheticPool pool;
  pool.generated.assign(experts.size(), 0);
  pool.kept.assign(experts.size(), 0);
  for (auto& r : results) {
    ++pool.generated[r.expert];
    if (r.sequence.tokens.size() < experts[r.expert].spec.sampling.min_tokens) {
      ++pool.filtered_short;
      continue;
    }
    ++pool.kept[r.expert];
    pool.entries.push_back(std::move(r));
  }
  return pool;
}

std::vector<SequenceFileRow> pool_rows(const SyntheticPool& pool) {
  std::vector<SequenceFileRow> rows;
  for (const auto& e : pool.entries) {
    SequenceFileRow r{e.sequence, {}};
    r.extra["expert"] = std::to_string(e.expert);
    r.extra["index"] = std::to_string(e.index);
    r.extra["seed"] = std::to_string(e.seed);
    r.extra["hit_max_tokens"] = e.hit_max_tokens ? "1" : "0";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::pair<std::string, double>> ConversionReport::fractions() const {
  std::vector<std::pair<std::string, double>> out;
  if (attempted == 0) return out;
  const double n = static_cast<double>(attempted);
  out.emplace_back("converted", static_cast<double>(succeeded) / n);
  for (const auto& [reason, c] : failures) out.emplace_back(reason, static_cast<double>(c) / n);
  return out;
}

double ConversionReport::success_rate() const {
  return attempted ? static_cast<double>(succeeded) / static_cast<double>(attempted) : 0.0;
}

std::string ConversionReport::to_csv() const {
  std::ostringstream o;
  o << "outcome,count,fraction\n";
  o << "attempted," << attempted << ",1\n";
  for (const auto& [name, f] : fractions()) {
    const size_t c = name == "converted" ? succeeded : failures.at(name);
    o << name << ',' << c << ',' << f << '\n';
  }
  return o.str();
}

Conversion convert_to_tables(std::span<const TokenSequence> corpus, const CodecConfig& codec) {
  Conversion out;
  DecodeOptions opts;
  opts.allow_truncated = true;
  for (const auto& seq : corpus) {
    ++out.report.attempted;
    try {
      PatientRecord r = decode_sequence(seq, codec, opts);
      validate_record(r, codec);
      r.person_id = std::to_string(out.records.size() + 1);
      out.records.push_back(std::move(r));
      ++out.report.succeeded;
    } catch (const DecodeError& e) {
      ++out.report.failures[e.reason()];
    } catch (const ValidationError&) {
      ++out.report.failures["invalid_record"];
    }
  }
  out.tables = tables_from_records(out.records);
  return out;
}

SummaryStats summary_stats(const EventTables& tables, const CodecConfig& codec) {
  auto records = records_from_tables(tables, codec);
  if (records.empty()) throw ValidationError("summary_stats: no persons with visits");
  SummaryStats s;
  s.persons = records.size();
  std::vector<double> ages, visits, toks;
  size_t female = 0;
  for (const auto& r : records) {
    ages.push_back(r.visits.front().start.year() - r.birth_year);
    visits.push_back(static_cast<double>(r.visits.size()));
    toks.push_back(static_cast<double>(encode_patient(r, codec).tokens.size()));
    female += r.gender_concept == kFemaleConcept;
  }
  s.median_age = quantile(ages, 0.5);
  s.female_percent = 100.0 * static_cast<double>(female) / static_cast<double>(records.size());
  for (int i = 0; i < 3; ++i) {
    s.visit_quartiles[i] = quantile(visits, 0.25 * (i + 1));
    s.token_quartiles[i] = quantile(toks, 0.25 * (i + 1));
  }
  return s;
}

std::string SummaryStats::csv_header() {
  return "dataset,persons,median_age,female_percent,visits_q1,visits_median,visits_q3,tokens_q1,tokens_median,"
         "tokens_q3\n";
}

std::string SummaryStats::to_csv(const std::string& label) const {
  std::ostringstream o;
  o << label << ',' << persons << ',' << median_age << ',' << female_percent;
  for (double q : visit_quartiles) o << ',' << q;
  for (double q : token_quartiles) o << ',' << q;
  o << '\n';
  return o.str();
}

}  // namespace ehrgen
