// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "codec/codec.hpp"
#include "codec/tables.hpp"
#include "common/parallel.hpp"
#include "eval/harness.hpp"
#include "eval/metrics.hpp"
#include "fixtures/hospital.hpp"
#include "generator/generator.hpp"
#include "pipeline/pipeline.hpp"
#include "privacy/privacy.hpp"
#include "simstudy/simstudy.hpp"
#include "test_support.hpp"
#include "trainer/trainer.hpp"
#include "zeroshot/zeroshot.hpp"

using namespace ehrgen;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Hand-built routing network.
Outcome handcrafted() {
  const auto t = handcrafted_forward(0, 6, 1);
  bool ok = t.a1 == std::array<int, 6>{0, 1, 1, 0, 0, 1} && t.a2 == std::array<int, 4>{0, 1, 0, 0} && t.y == 1;
  size_t wrong = 0;
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int dt = 0; dt <= kMaxTime; ++dt) {
        const int want = dt <= 7 ? (x1 ^ x2) : (x1 & x2);
        wrong += handcrafted_forward(x1, dt, x2).y != want;
      }
  ok = ok && wrong == 0;
  return {ok, "trace [0,6,1] " + std::string(t.y == 1 ? "matches" : "differs") + ", mismatches " +
                  std::to_string(wrong) + "/116"};
}

// 2. Time-token vs summation encoders, five seeds.
Outcome simulation() {
  const EncoderConfig cfg;
  std::vector<ComparisonCurves> runs(5);
  parallel_for(runs.size(), default_threads(), [&](size_t i) { runs[i] = run_comparison(cfg, i, 1); });
  size_t converged = 0, separated = 0;
  std::vector<double> final_tt, final_sum;
  std::ostringstream d;
  for (size_t s = 0; s < runs.size(); ++s) {
    const auto& c = runs[s];
    const auto hit = c.first_reaching(0.99);
    d << " seed" << s << "=";
    if (hit && c.steps[*hit] < cfg.steps) {
      ++converged;
      const double gap = c.acc_timetoken[*hit] - c.acc_sum[*hit];
      if (gap >= 0.05) ++separated;
      d << "step " << c.steps[*hit] << " gap " << fmt("%.3f", gap);
    } else {
      d << "no convergence";
    }
    final_tt.push_back(c.acc_timetoken.back());
    final_sum.push_back(c.acc_sum.back());
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double mt = median(final_tt), ms = median(final_sum);
  // Reported, not part of the pass rule: the end-of-run gap between the two encoders.
  std::printf("INFO  2 final accuracy medians: time-token %.4f, summation %.4f (gap %.4f; %s 0.05)\n", mt, ms,
              mt - ms, mt - ms >= 0.05 ? ">=" : "<");
  return {converged >= 4 && separated >= 4,
          std::to_string(converged) + "/5 converged, " + std::to_string(separated) + "/5 separated;" + d.str()};
}

// 3. Finite-difference check of the full loss on three random toy configurations.
Outcome gradients() {
  Rng rng = make_rng(2024, {3});
  auto pick = [&](int lo, int hi) { return static_cast<size_t>(std::uniform_int_distribution<int>(lo, hi)(rng)); };
  double worst = 0;
  std::ostringstream d;
  for (int k = 0; k < 3; ++k) {
    ToyGradCheckConfig c;
    c.n_heads = pick(1, 3);
    c.embed_dim = 3 * c.n_heads * pick(1, 2);
    c.n_layers = pick(1, 3);
    c.n_sequences = pick(1, 3);
    c.seq_len = pick(8, 16);
    c.entries_per_param = 48;
    const auto r = model_gradcheck(c, rng());
    worst = std::max(worst, r.max_rel_error);
    d << " d" << c.embed_dim << "/h" << c.n_heads << "/L" << c.n_layers << "=" << fmt("%.2e", r.max_rel_error);
  }
  return {worst < 1e-4, "max rel error " + fmt("%.2e", worst) + ";" + d.str()};
}

// 4. Time decomposition.
Outcome decomposition() {
  const bool examples = decompose_interval(396) == TimeTriple{1, 1, 1} && decompose_interval(1) == TimeTriple{0, 0, 1};
  size_t bad = 0;
  for (int64_t d = 0; d < 1080; ++d) {
    const auto t = decompose_interval(d);
    bad += t.recompose() != d || t.months < 0 || t.months > 12 || t.days < 0 || t.days > 29;
  }
  return {examples && bad == 0, std::string("worked examples ") + (examples ? "exact" : "wrong") +
                                    ", recomposition failures " + std::to_string(bad) + "/1080"};
}

// 5. Encode/decode round trip.
Outcome round_trip() {
  Rng rng = make_rng(5);
  const CodecConfig cfg;
  size_t grammar_bad = 0, mismatched = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto r = testing::random_record(rng, {}, "p" + std::to_string(i));
    const auto seq = encode_patient(r, cfg);
    grammar_bad += !validate_grammar(seq.tokens, cfg).ok;
    DecodeOptions opts;
    opts.anchor = r.visits.front().start;
    auto back = decode_sequence(seq, cfg, opts);
    back.person_id = r.person_id;
    mismatched += !(back == r);
  }
  return {grammar_bad == 0 && mismatched == 0, "grammar rejections " + std::to_string(grammar_bad) +
                                                   ", round-trip mismatches " + std::to_string(mismatched) + "/1000"};
}

// 6. A small model memorizes a 32-patient corpus.
Outcome overfit() {
  HospitalConfig hc;
  hc.n_patients = 32;
  hc.seed = 6;
  hc.distinct_start_years = true;
  std::vector<TokenSequence> corpus;
  for (const auto& r : generate_hospital(hc)) corpus.push_back(encode_patient(r, CodecConfig{}));
  const Vocabulary vocab = Vocabulary::build(corpus);
  std::vector<EncodedSequence> enc;
  size_t longest = 0;
  for (const auto& s : corpus) {
    enc.push_back(encode_ids(s, vocab));
    longest = std::max(longest, s.tokens.size());
  }
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = 48;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.context_window = std::max<size_t>(longest, 64);
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.weight_decay = 0.0;
  tc.warmup_steps = 50;
  tc.max_epochs = 1000000;
  tc.max_steps = 2000;
  tc.tokens_per_batch = 1024;
  tc.early_stop_patience = 1000000;
  tc.seed = 6;
  const auto batches = pack(enc, tc.tokens_per_batch, vocab);
  Checkpoint ck{Model(mc, 6), vocab, {}, {}, {}, 6};
  TrainHooks hooks;
  hooks.eval_every_steps = 50;
  uint64_t reached = 0;
  double last = 0;
  hooks.on_eval = [&](uint64_t step, const EvalResult& e) {
    last = e.ntp_per_target;
    if (e.ntp_per_target < 0.1 && !reached) reached = step;
    return reached != 0;
  };
  // Evaluated on the training corpus itself.
  const auto res = train(ck, batches, batches, tc, hooks);
  const double final_ntp = evaluate(ck.model, batches).ntp_per_target;
  const bool ok = reached != 0 && reached <= 2000 && final_ntp < 0.1;
  return {ok, "NTP " + fmt("%.4f", final_ntp) + (reached ? " reached at step " + std::to_string(reached)
                                                         : " after " + std::to_string(res.steps) + " steps") +
                  " (" + std::to_string(batches.size()) + " batches, last eval " + fmt("%.4f", last) + ")"};
}

// 7. Monte Carlo outcome probability vs exact enumeration on rigged chains.
struct RiggedChain {
  std::vector<std::vector<double>> p;
  std::vector<TokenMeaning> meanings;
};

RiggedChain make_chain(Rng& rng) {
  // 0..2 filler, 3 seven-day gap, 4 twenty-day gap, 5 outcome, 6 end.
  RiggedChain c;
  c.meanings.resize(7);
  c.meanings[3].days = 7;
  c.meanings[4].days = 20;
  c.meanings[5].outcome = true;
  c.meanings[6].end = true;
  for (int i = 0; i < 7; ++i) {
    std::vector<double> row(7);
    for (int j = 0; j < 7; ++j) row[static_cast<size_t>(j)] = uniform01(rng) + 0.05;
    row[6] *= 0.3;
    const double z = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= z;
    c.p.push_back(row);
  }
  return c;
}

// Probability of a positive among uncensored continuations, by enumerating all paths.
double exact_hit(const RiggedChain& c, TokenId start, int64_t lo, int64_t hi, size_t horizon) {
  double pos = 0, neg = 0;
  std::map<std::pair<TokenId, int64_t>, double> frontier{{{start, 0}, 1.0}};
  for (size_t k = 0; k < horizon; ++k) {
    std::map<std::pair<TokenId, int64_t>, double> next;
    for (const auto& [state, p] : frontier)
      for (TokenId t = 0; t < 7; ++t) {
        const auto& m = c.meanings[static_cast<size_t>(t)];
        const double q = p * c.p[static_cast<size_t>(state.first)][static_cast<size_t>(t)];
        const int64_t el = state.second + m.days;
        if (m.end) continue;
        if (el > hi) {
          neg += q;
        } else if (m.outcome && el >= lo) {
          pos += q;
        } else if (k + 1 == horizon) {
          neg += q;
        } else {
          next[{t, el}] += q;
        }
      }
    frontier = std::move(next);
  }
  return pos / (pos + neg);
}

Outcome zeroshot_oracle() {
  Rng rng = make_rng(7);
  size_t inside = 0;
  double worst_z = 0;
  for (int i = 0; i < 100; ++i) {
    const RiggedChain c = make_chain(rng);
    std::vector<TokenId> prompt;
    const size_t len = 1 + rng() % 6;
    for (size_t k = 0; k < len; ++k) prompt.push_back(static_cast<TokenId>(rng() % 5));
    TaskConfig task;
    task.task_name = "rigged";
    task.outcome_events = {1};
    task.prediction_window_start = static_cast<int64_t>(rng() % 10);
    task.prediction_window_end = task.prediction_window_start + 10 + static_cast<int64_t>(rng() % 30);
    task.max_new_tokens = 4 + rng() % 5;
    task.n_simulations = 50;
    MarkovDecoder dec(c.p);
    for (TokenId t : prompt) dec.feed(t);
    const double want =
        exact_hit(c, prompt.back(), task.prediction_window_start, task.prediction_window_end, task.max_new_tokens);
    const auto r = simulate_probability(dec, c.meanings, task, rng());
    const double sd = std::sqrt(want * (1 - want) / static_cast<double>(r.completed));
    const double err = std::abs(r.probability - want);
    if (r.completed == 50 && err <= 3 * sd) ++inside;
    if (sd > 0) worst_z = std::max(worst_z, err / sd);
  }
  return {inside >= 95, std::to_string(inside) + "/100 within 3 SD (worst " + fmt("%.2f", worst_z) + " SD)"};
}

// 8. Sampler limits.
Outcome sampler() {
  HospitalConfig hc;
  hc.n_patients = 30;
  std::vector<TokenSequence> corpus;
  for (const auto& r : generate_hospital(hc)) corpus.push_back(encode_patient(r, CodecConfig{}));
  const Vocabulary vocab = Vocabulary::build(corpus);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = 12;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.context_window = 48;
  const Model model(mc, 8);
  const TokenId end_id = vocab.id(std::string(tokens::kEnd));

  Rng rng = make_rng(8);
  SamplingConfig cold;
  cold.temperature = 1e-6;
  cold.max_tokens = 40;
  size_t greedy_same = 0;
  std::vector<double> lg;
  for (int i = 0; i < 100; ++i) {
    std::vector<TokenId> prompt;
    const size_t len = 1 + rng() % 10;
    for (size_t k = 0; k < len; ++k) prompt.push_back(static_cast<TokenId>(rng() % vocab.size()));
    ModelDecoder a(model), b(model);
    const auto sampled = sample_sequence(a, prompt, cold, end_id, rng);
    std::vector<TokenId> greedy = prompt;
    for (TokenId t : prompt) b.feed(t);
    while (greedy.size() < cold.max_tokens && greedy.back() != end_id) {
      b.logits(lg);
      const auto t = static_cast<TokenId>(std::max_element(lg.begin(), lg.end()) - lg.begin());
      greedy.push_back(t);
      b.feed(t);
    }
    greedy_same += sampled.ids == greedy;
  }

  // Neutral controls on a 3-token chain: draws follow the chain's own distribution.
  const std::vector<double> target = {0.5, 0.3, 0.2};
  MarkovDecoder chain({target, target, target});
  SamplingConfig neutral;
  neutral.max_tokens = 2;
  std::vector<size_t> counts(3, 0);
  const std::vector<TokenId> start = {0};
  for (int i = 0; i < 10000; ++i) {
    chain.reset();
    ++counts[static_cast<size_t>(sample_sequence(chain, start, neutral, 99, rng).ids[1])];
  }
  double chi2 = 0;
  for (size_t k = 0; k < 3; ++k) {
    const double e = 10000 * target[k];
    chi2 += (static_cast<double>(counts[k]) - e) * (static_cast<double>(counts[k]) - e) / e;
  }
  const bool chi_ok = chi2 < 9.2103;  // chi-square 0.99 quantile, 2 degrees of freedom

  // Repetition penalty on fixed logits.
  size_t reduced = 0;
  SamplingConfig plain, penal;
  penal.repetition_penalty = 2.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> logits(8);
    for (double& v : logits) v = 4 * uniform01(rng) - 2;
    std::vector<TokenId> history;
    const size_t h = 1 + rng() % 4;
    for (size_t k = 0; k < h; ++k) history.push_back(static_cast<TokenId>(rng() % 8));
    const std::set<TokenId> seen(history.begin(), history.end());
    const auto p1 = next_token_distribution(logits, history, plain);
    const auto p2 = next_token_distribution(logits, history, penal);
    double m1 = 0, m2 = 0;
    for (TokenId t : seen) m1 += p1[static_cast<size_t>(t)], m2 += p2[static_cast<size_t>(t)];
    reduced += m2 < m1;
  }
  return {greedy_same == 100 && chi_ok && reduced == 100,
          "greedy matches " + std::to_string(greedy_same) + "/100, chi2 " + fmt("%.3f", chi2) +
              ", penalty reduced repeat mass " + std::to_string(reduced) + "/100"};
}

// 9. Ranking metrics vs pairwise brute force.
double brute_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0, den = 0;
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / den;
}

// Interpolated precision (max at any recall at least as large) summed over recall steps.
double brute_auprc(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> th(s.begin(), s.end());
  std::sort(th.begin(), th.end(), std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  std::vector<double> rec, prec;
  for (double t : th) {
    double tp = 0, fp = 0;
    for (size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    rec.push_back(tp / pos);
    prec.push_back(tp / (tp + fp));
  }
  double area = 0, prev = 0;
  for (size_t k = 0; k < th.size(); ++k) {
    double best = 0;
    for (size_t q = 0; q < th.size(); ++q)
      if (rec[q] >= rec[k]) best = std::max(best, prec[q]);
    area += (rec[k] - prev) * best;
    prev = rec[k];
  }
  return area;
}

Outcome metrics() {
  const std::vector<double> hs = {.9, .8, .7, .6, .5, .4};
  const std::vector<int> hy = {1, 1, 0, 1, 0, 0};
  const bool hand = std::abs(auroc(hs, hy) - 8.0 / 9.0) < 1e-15;
  Rng rng = make_rng(9);
  double worst = 0;
  size_t instances = 0;
  for (int i = 0; i < 300; ++i) {
    const size_t n = 2 + rng() % 199;
    std::vector<double> s(n);
    std::vector<int> y(n);
    const unsigned levels = 1 + static_cast<unsigned>(rng() % 40);  // few levels force ties
    for (size_t k = 0; k < n; ++k) {
      s[k] = static_cast<double>(rng() % levels) / levels;
      y[k] = static_cast<int>(rng() % 2);
    }
    y[0] = 1, y[1] = 0;
    worst = std::max({worst, std::abs(auroc(s, y) - brute_auroc(s, y)), std::abs(auprc(s, y) - brute_auprc(s, y))});
    ++instances;
  }
  return {hand && worst < 1e-12, std::string("hand case ") + (hand ? "8/9" : "wrong") + ", max |diff| " +
                                     fmt("%.1e", worst) + " over " + std::to_string(instances) + " instances"};
}

// 10. Privacy attacks on independent samples and on a copy of train.
struct AuditPair {
  PrivacyReport independent, copy;
};

AuditPair audit_pair(const std::vector<BinaryProfile>& train, const std::vector<BinaryProfile>& eval,
                     const std::vector<BinaryProfile>& synth, const ResolvedAttributes& attrs) {
  PrivacyConfig cfg;
  cfg.sample_size = 1000;
  cfg.seed = 10;
  return {run_privacy_audit(train, eval, synth, attrs, cfg, default_threads()),
          run_privacy_audit(train, eval, train, attrs, cfg, default_threads())};
}

std::string audit_line(const AuditPair& a) {
  std::ostringstream d;
  d << "independent nnaa " << fmt("%.4f", a.independent.nnaa) << " mi " << fmt("%.4f", a.independent.membership.score)
    << " ai " << fmt("%.4f", a.independent.attribute.score) << "; copy nnaa " << fmt("%.4f", a.copy.nnaa) << " mi "
    << fmt("%.4f", a.copy.membership.score) << " ai " << fmt("%.4f", a.copy.attribute.score) << " ("
    << (a.copy.pass() ? "PASS" : "FAIL") << ")";
  return d.str();
}

Outcome privacy() {
  // Known generator: 64 independent fair bits per profile.
  auto draw = [](uint64_t seed) {
    Rng rng = make_rng(seed);
    std::vector<BinaryProfile> out;
    for (int i = 0; i < 1000; ++i) {
      BinaryProfile b(64);
      for (size_t j = 0; j < 64; ++j) b.set(j, rng() & 1);
      out.push_back(b);
    }
    return out;
  };
  std::vector<size_t> keys(54), sensitive(10), qi(6);
  std::iota(keys.begin(), keys.end(), 0);
  std::iota(sensitive.begin(), sensitive.end(), 54);
  std::iota(qi.begin(), qi.end(), 0);
  const auto a = audit_pair(draw(101), draw(102), draw(103), {keys, sensitive, qi});
  const bool ind_ok = std::abs(a.independent.nnaa) < 0.05 && a.independent.membership.score < 0.05 &&
                      a.independent.attribute.score < 0.05;
  const bool copy_ok = a.copy.nnaa > kPrivacyRiskThreshold && a.copy.membership.score > kPrivacyRiskThreshold &&
                       a.copy.attribute.score > kPrivacyRiskThreshold && !a.copy.pass();

  // Reported only: hospital profiles, where no concept is near one half prevalence.
  auto tables = [](uint64_t seed) {
    HospitalConfig hc;
    hc.n_patients = 1000;
    hc.seed = seed;
    return tables_from_records(generate_hospital(hc));
  };
  const EventTables train_t = tables(101), eval_t = tables(102), synth_t = tables(103);
  const EventTables* all[] = {&train_t, &eval_t, &synth_t};
  const auto schema = ProfileSchema::build(all);
  const auto train_p = profiles_from_tables(train_t, schema);
  const auto h = audit_pair(train_p, profiles_from_tables(eval_t, schema), profiles_from_tables(synth_t, schema),
                            resolve_attributes(PrivacyConfig{}, schema, train_p));
  double ceiling = 0;
  for (size_t j = 0; j < h.copy.attribute.weights.size(); ++j)
    ceiling += h.copy.attribute.weights[j] * (1 - h.copy.attribute.baseline[j]);
  std::printf("INFO  10 hospital profiles: %s; attribute score ceiling %.4f\n", audit_line(h).c_str(), ceiling);
  return {ind_ok && copy_ok, audit_line(a)};
}

// 11. Train, generate with two experts, convert and report.
Outcome pipeline() {
  HospitalConfig hc;
  hc.n_patients = 500;
  hc.seed = 11;
  const auto records = generate_hospital(hc);
  const CodecConfig codec;
  ModelConfig mc;
  mc.embed_dim = 96;
  mc.n_layers = 3;
  mc.n_heads = 4;
  mc.context_window = 256;
  mc.dropout_rate = 0.1;
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.warmup_steps = 200;
  tc.max_epochs = 150;
  tc.tokens_per_batch = 512;
  tc.early_stop_patience = 8;
  tc.seed = 11;
  testing::TempDir dir("acceptance");
  const auto run = train_from_records(records, codec, mc, tc, dir.path, false);
  const Checkpoint ck = Checkpoint::load(dir / "best.bin");
  const ModelDecoder decoder(ck.model);

  std::vector<Expert> experts(2);
  experts[0].spec.count = 100;
  experts[0].spec.sampling.name = "nucleus";
  experts[0].spec.sampling.seed = 1;
  experts[0].spec.sampling.temperature = 0.8;
  experts[0].spec.sampling.top_p = 0.95;
  experts[1].spec.count = 100;
  experts[1].spec.sampling.name = "topk";
  experts[1].spec.sampling.seed = 2;
  experts[1].spec.sampling.temperature = 0.9;
  experts[1].spec.sampling.top_k = 30;
  for (auto& e : experts) {
    e.spec.sampling.max_tokens = mc.context_window;
    e.spec.sampling.min_tokens = 0;
    e.decoder = &decoder;
    e.prompts = &ck.prompts;
  }
  const auto pool = generate_pool(experts, ck.vocab, default_threads());
  std::vector<TokenSequence> seqs;
  for (const auto& e : pool.entries) seqs.push_back(e.sequence);
  const auto conv = convert_to_tables(seqs, codec);
  const auto real = tables_from_records(records);
  const auto real_stats = summary_stats(real, codec);
  const auto syn_stats = summary_stats(conv.tables, codec);
  const auto prev = prevalence_report(real, conv.tables, codec);
  double frac = 0;
  for (const auto& [name, f] : conv.report.fractions()) frac += f;
  const double rate = conv.report.success_rate();
  const bool ok = rate >= 0.9 && std::abs(frac - 1.0) < 1e-12 && syn_stats.persons == conv.report.succeeded &&
                  real_stats.persons == records.size() && !prev.empty();
  std::ostringstream d;
  d << "trained " << run.result.steps << " steps (eval loss " << fmt("%.3f", run.result.best_eval) << "), converted "
    << conv.report.succeeded << "/" << conv.report.attempted << " = " << fmt("%.3f", rate) << ", fractions sum "
    << fmt("%.12f", frac) << ", prevalence rows " << prev.size() << ", synthetic median age "
    << fmt("%.1f", syn_stats.median_age);
  return {ok, d.str()};
}

// 12. Pathway cohort on a hand-labeled fixture: 365-day lookback, nine 120-day intervals.
Outcome pathway() {
  EventTables t;
  const Day origin = Day::from_ymd(2005, 1, 1);
  int vid = 0;
  auto event = [&](const std::string& id, int day, int64_t concept_id) {
    const std::string v = "v" + std::to_string(++vid);
    t.visits.push_back({v, id, 9202, origin + day, origin + day, std::nullopt});
    t.events.push_back({id, v, Domain::Drug, concept_id, origin + day});
  };
  constexpr int64_t kDrug = 1503297, kOther = 4000;
  auto person = [&](const std::string& id) { t.persons.push_back({id, 1950, 8507, 8527}); };

  // A: lookback exactly 365 days, one exposure at the start of each interval.
  person("A");
  event("A", 0, kOther);
  for (int k = 0; k < 9; ++k) event("A", 365 + 120 * k, kDrug);
  // B: as A but the ninth interval is empty (its exposure lands one interval late).
  person("B");
  event("B", 0, kOther);
  for (int k = 0; k < 8; ++k) event("B", 365 + 120 * k, kDrug);
  event("B", 365 + 120 * 9, kDrug);
  // C: 364 days of history before the first exposure.
  person("C");
  event("C", 1, kOther);
  for (int k = 0; k < 12; ++k) event("C", 365 + 60 * k, kDrug);
  // D: exposures every 119 days, so every interval holds one.
  person("D");
  event("D", 0, kOther);
  for (int k = 0; k < 10; ++k) event("D", 400 + 119 * k, kDrug);
  // E: never exposed.
  person("E");
  event("E", 0, kOther);
  event("E", 900, kOther);
  // F: dense exposures except the fifth interval [index+480, index+600).
  person("F");
  event("F", 0, kOther);
  for (int day = 500; day < 500 + 1080; day += 30)
    if (day - 500 < 480 || day - 500 >= 600) event("F", day, kDrug);

  CohortSpec spec;
  spec.index_concepts = {kDrug};
  spec.lookback_days = 365;
  spec.interval_days = 120;
  spec.repetitions = 9;
  const auto r = pathway_cohort(t, spec);
  const std::vector<std::string> expected = {"A", "D"};
  std::string got;
  for (const auto& m : r.members) got += m;
  return {r.members == expected && r.persons == 6 && std::abs(r.prevalence - 2.0 / 6.0) < 1e-15,
          "members {" + got + "} expected {AD}, prevalence " + fmt("%.4f", r.prevalence)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    std::string name;
    std::function<Outcome()> run;
    double budget_s;  // wall-clock limit, part of the criterion
  };
  const std::vector<Criterion> criteria = {
      {"handcrafted routing network", handcrafted, 1},
      {"time-token vs summation encoders", simulation, 5 * 600},
      {"loss gradients", gradients, 60},
      {"time decomposition", decomposition, 1},
      {"codec round trip", round_trip, 10},
      {"overfit 32 patients", overfit, 300},
      {"zero-shot estimator", zeroshot_oracle, 300},
      {"sampler limits", sampler, 60},
      {"ranking metrics", metrics, 60},
      {"privacy properties", privacy, 60},
      {"pipeline integration", pipeline, 1800},
      {"pathway cohort", pathway, 1},
  };
  std::set<size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > criteria[i].budget_s) {
      o.pass = false;
      o.detail += " (over the " + fmt("%.0f", criteria[i].budget_s) + "s budget)";
    }
    std::printf("%s  %zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
