#include <cmath>
#include <numeric>

#include "common/errors.hpp"
#include "doctest.h"
#include "fixtures/hospital.hpp"
#include "generator/generator.hpp"
#include "test_support.hpp"

using namespace ehrgen;

namespace {

// Pearson statistic of observed counts against expected probabilities.
double chi_square(const std::vector<size_t>& counts, const std::vector<double>& probs) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), size_t{0}));
  double x2 = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[i];
    x2 += (static_cast<double>(counts[i]) - e) * (static_cast<double>(counts[i]) - e) / e;
  }
  return x2;
}

// Histogram of sampled continuation lengths (1..5, 6+) for a two-token chain that ends with
// probability `stop` after every step.
std::vector<size_t> length_histogram(const SamplingConfig& cfg, size_t n, uint64_t seed) {
  MarkovDecoder chain({{0.7, 0.3}, {0.7, 0.3}});
  Rng rng = make_rng(seed);
  std::vector<size_t> h(6, 0);
  const std::vector<TokenId> prompt = {0};
  for (size_t i = 0; i < n; ++i) {
    chain.reset();
    const auto s = sample_sequence(chain, prompt, cfg, 1, rng);
    ++h[std::min<size_t>(s.ids.size() - 1, 6) - 1];
  }
  return h;
}

std::vector<double> geometric_bins(double stop) {
  std::vector<double> p;
  for (int k = 1; k <= 5; ++k) p.push_back(std::pow(1 - stop, k - 1) * stop);
  p.push_back(std::pow(1 - stop, 5));
  return p;
}

constexpr double kChi2Df5At001 = 20.515;

}  // namespace

TEST_CASE("decoding controls on a hand example") {
  const std::vector<double> logits = {2.0, 1.0, 0.0, -1.0};
  SamplingConfig cfg;
  auto p = next_token_distribution(logits, {}, cfg);
  double z = std::exp(2.0) + std::exp(1.0) + 1 + std::exp(-1.0);
  CHECK(p[0] == doctest::Approx(std::exp(2.0) / z));

  // Penalty divides positive logits and multiplies negative ones.
  cfg.repetition_penalty = 2.0;
  const std::vector<TokenId> hist = {0, 3, 3};
  p = next_token_distribution(logits, hist, cfg);
  z = std::exp(1.0) + std::exp(1.0) + 1 + std::exp(-2.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z));
  CHECK(p[3] == doctest::Approx(std::exp(-2.0) / z));

  cfg = {};
  cfg.temperature = 0.5;
  p = next_token_distribution(logits, {}, cfg);
  z = std::exp(4.0) + std::exp(2.0) + 1 + std::exp(-2.0);
  CHECK(p[1] == doctest::Approx(std::exp(2.0) / z));

  cfg = {};
  cfg.top_k = 2;
  p = next_token_distribution(logits, {}, cfg);
  CHECK(p[2] == 0.0);
  CHECK(p[3] == 0.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1)));

  // Smallest prefix whose mass reaches top_p: p0 = 0.644, p0 + p1 = 0.881.
  cfg = {};
  cfg.top_p = 0.7;
  p = next_token_distribution(logits, {}, cfg);
  CHECK(p[1] > 0);
  CHECK(p[2] == 0.0);
  cfg.top_p = 0.6;
  p = next_token_distribution(logits, {}, cfg);
  CHECK(p[0] == 1.0);

  const std::vector<double> dead = {-INFINITY, -INFINITY};
  CHECK_THROWS_AS(next_token_distribution(dead, {}, SamplingConfig{}), ValidationError);
}

TEST_CASE("low temperature approaches greedy decoding") {
  const std::vector<double> logits = {0.3, 1.2, 1.1, -4.0};
  SamplingConfig cfg;
  cfg.temperature = 1e-3;
  const auto p = next_token_distribution(logits, {}, cfg);
  CHECK(p[1] == doctest::Approx(1.0));
  Rng rng = make_rng(7);
  for (int i = 0; i < 100; ++i) CHECK(sample_from(p, rng) == 1);
}

TEST_CASE("sampled lengths follow the chain's geometric law") {
  SamplingConfig cfg;
  cfg.max_tokens = 1000;
  CHECK(chi_square(length_histogram(cfg, 20000, 1), geometric_bins(0.3)) < kChi2Df5At001);

  // Temperature 0.5 squares the probabilities: stop = 0.09 / (0.49 + 0.09).
  cfg.temperature = 0.5;
  CHECK(chi_square(length_histogram(cfg, 20000, 2), geometric_bins(0.09 / 0.58)) < kChi2Df5At001);

  // The continuation token is always in the history, so its log-probability is doubled.
  cfg.temperature = 1.0;
  cfg.repetition_penalty = 2.0;
  CHECK(chi_square(length_histogram(cfg, 20000, 3), geometric_bins(0.3 / 0.79)) < kChi2Df5At001);

  // The statistic does detect a wrong law.
  cfg = {};
  cfg.max_tokens = 1000;
  CHECK(chi_square(length_histogram(cfg, 20000, 4), geometric_bins(0.35)) > kChi2Df5At001);
}

TEST_CASE("length limits") {
  MarkovDecoder loop({{1.0, 0.0}, {1.0, 0.0}});
  SamplingConfig cfg;
  cfg.max_tokens = 7;
  Rng rng = make_rng(0);
  const std::vector<TokenId> prompt = {0, 0};
  auto s = sample_sequence(loop, prompt, cfg, 1, rng);
  CHECK(s.ids.size() == 7);
  CHECK(s.hit_max_tokens);

  MarkovDecoder short_window({{1.0, 0.0}, {1.0, 0.0}}, 4);
  s = sample_sequence(short_window, prompt, cfg, 1, rng);
  CHECK(s.ids.size() == 4);
  CHECK(s.hit_max_tokens);

  MarkovDecoder ends({{0.0, 1.0}, {0.0, 1.0}});
  s = sample_sequence(ends, prompt, cfg, 1, rng);
  CHECK(s.ids == std::vector<TokenId>{0, 0, 1});
  CHECK(!s.hit_max_tokens);

  cfg.temperature = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK_THROWS_AS(MarkovDecoder({{0.5, 0.4}, {1.0, 0.0}}), ValidationError);
}

TEST_CASE("pool generation is deterministic and thread-count independent") {
  HospitalConfig hc;
  hc.n_patients = 20;
  std::vector<TokenSequence> corpus;
  for (const auto& r : generate_hospital(hc)) corpus.push_back(encode_patient(r, CodecConfig{}));
  const Vocabulary vocab = Vocabulary::build(corpus);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = 12;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.context_window = 40;
  const Model model(mc, 3);
  const ModelDecoder decoder(model);
  const auto prompts = PromptDistribution::from_corpus(corpus);

  std::vector<Expert> experts(2);
  experts[0].spec.count = 6;
  experts[0].spec.sampling.seed = 10;
  experts[0].spec.sampling.min_tokens = 0;
  experts[1].spec.count = 5;
  experts[1].spec.sampling.seed = 11;
  experts[1].spec.sampling.top_k = 5;
  experts[1].spec.sampling.min_tokens = 41;  // longer than the window: everything filtered
  for (auto& e : experts) {
    e.decoder = &decoder;
    e.prompts = &prompts;
  }
  const auto a = generate_pool(experts, vocab, 1);
  const auto b = generate_pool(experts, vocab, 3);
  CHECK(a.generated == std::vector<size_t>{6, 5});
  CHECK(a.kept == std::vector<size_t>{6, 0});
  CHECK(a.filtered_short == 5);
  REQUIRE(a.entries.size() == b.entries.size());
  for (size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].sequence.tokens == b.entries[i].sequence.tokens);
    CHECK(a.entries[i].seed == b.entries[i].seed);
    CHECK(a.entries[i].index == i);
    CHECK(prompts.counts().count({a.entries[i].sequence.tokens[0], a.entries[i].sequence.tokens[1],
                                  a.entries[i].sequence.tokens[2], a.entries[i].sequence.tokens[3]}) == 1);
  }
  CHECK(pool_rows(a).size() == 6);
}

TEST_CASE("conversion report accounts for every sequence") {
  Rng rng = make_rng(5);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(encode_patient(testing::random_record(rng), CodecConfig{}));
  corpus[1].tokens.pop_back();  // no [END]: cut after the last visit, still converts
  corpus[2].tokens.insert(corpus[2].tokens.begin() + 5, "[VS]");
  corpus[3].tokens = {"[year:2001]", "[age:3]"};
  corpus[4].tokens.push_back("[C:1]");
  const auto conv = convert_to_tables(corpus, CodecConfig{});
  CHECK(conv.report.attempted == 10);
  CHECK(conv.report.succeeded == 7);
  CHECK(conv.records.size() == 7);
  CHECK(conv.records.front().person_id == "1");
  double total = 0;
  for (const auto& [name, f] : conv.report.fractions()) total += f;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(conv.report.failures.at("missing_prefix") == 1);
  CHECK(conv.report.failures.at("trailing_tokens") == 1);
  CHECK(conv.report.to_csv().find("converted,7,0.7") != std::string::npos);
  CHECK(conv.tables.persons.size() == 7);
}

TEST_CASE("summary statistics on a hand cohort") {
  std::vector<PatientRecord> recs;
  for (int i = 0; i < 5; ++i) {
    PatientRecord r;
    r.person_id = std::to_string(i);
    r.birth_year = 2000 - 10 * i;
    r.gender_concept = i < 2 ? kFemaleConcept : 8507;
    r.race_concept = 8527;
    for (int v = 0; v <= i; ++v) {
      Visit vis;
      vis.visit_concept_id = 9202;
      vis.start = vis.end = Day::from_ymd(2010, 1, 1) + 40 * v;
      vis.events.push_back({100 + v, Domain::Condition, vis.start});
      r.visits.push_back(vis);
    }
    recs.push_back(r);
  }
  const auto s = summary_stats(tables_from_records(recs), CodecConfig{});
  CHECK(s.persons == 5);
  CHECK(s.median_age == doctest::Approx(30));
  CHECK(s.female_percent == doctest::Approx(40));
  CHECK(s.visit_quartiles[0] == doctest::Approx(2));
  CHECK(s.visit_quartiles[1] == doctest::Approx(3));
  CHECK(s.visit_quartiles[2] == doctest::Approx(4));
  // 4 prefix + 4 per visit + 1 between visits + [END]
  CHECK(s.token_quartiles[1] == doctest::Approx(4 + 4 * 3 + 2 + 1));
}

TEST_CASE("expert list YAML") {
  const auto ex = parse_experts(
      "experts:\n  - name: greedy\n    temperature: 0.5\n    top_k: 10\n    count: 3\n"
      "  - name: wide\n    top_p: 0.9\n    repetition_penalty: 1.2\n    count: 2\n    seed: 4\n",
      "inline");
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].sampling.name == "greedy");
  CHECK(ex[0].sampling.top_k == 10);
  CHECK(ex[0].count == 3);
  CHECK(ex[1].sampling.top_p == doctest::Approx(0.9));
  CHECK(ex[1].sampling.seed == 4);
  CHECK_THROWS(parse_experts("experts:\n  - temperature: -1\n    count: 1\n", "inline"));
  CHECK_THROWS(parse_experts("experts:\n  - tempreature: 1\n    count: 1\n", "inline"));
  CHECK_THROWS(parse_experts("foo: 1\n", "inline"));
}
