#include "pipeline/pipeline.hpp"

#include <map>
#include <random>
#include <sstream>

#include "common/config.hpp"
#include "common/csv.hpp"
#include "common/errors.hpp"
#include "fixtures/hospital.hpp"
#include "generator/sampler.hpp"

namespace ehrgen {

ModelConfig parse_model_config(const std::string& yaml_text, const std::string& source) {
  YAML::Node n = parse_yaml(yaml_text, source);
  check_keys(n, {"embed_dim", "n_layers", "n_heads", "context_window", "dropout_rate", "max_td_year_class"}, source);
  ModelConfig c;
  c.embed_dim = yaml_get(n, "embed_dim", c.embed_dim, source);
  c.n_layers = yaml_get(n, "n_layers", c.n_layers, source);
  c.n_heads = yaml_get(n, "n_heads", c.n_heads, source);
  c.context_window = yaml_get(n, "context_window", c.context_window, source);
  c.dropout_rate = yaml_get(n, "dropout_rate", c.dropout_rate, source);
  c.max_td_year_class = yaml_get(n, "max_td_year_class", c.max_td_year_class, source);
  ModelConfig probe = c;
  probe.vocab_size = 1;
  probe.validate();
  return c;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  return parse_model_config(read_file(path), path.string());
}

TrainRun train_from_records(std::span<const PatientRecord> records, const CodecConfig& codec, ModelConfig model_cfg,
                            const TrainConfig& cfg, const std::filesystem::path& out_dir, bool resume) {
  cfg.validate();
  PreparedCorpus corpus = prepare_corpus(records, codec, model_cfg.context_window, cfg);
  if (corpus.train.empty()) throw ValidationError("no training sequences remain after filtering");

  TrainRun run;
  std::optional<Checkpoint> ck;
  const auto latest = out_dir / "latest.bin";
  if (resume && std::filesystem::exists(latest)) {
    ck = Checkpoint::load(latest);
    run.resumed = true;
  } else {
    std::vector<TokenSequence> all = corpus.train;
    all.insert(all.end(), corpus.eval.begin(), corpus.eval.end());
    Vocabulary vocab = Vocabulary::build(all);
    model_cfg.vocab_size = vocab.size();
    ck = Checkpoint{Model(model_cfg, cfg.seed), std::move(vocab), {}, {}, PromptDistribution::from_corpus(corpus.train),
                    cfg.seed};
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    ck->vocab.save(out_dir / "vocab.txt");
  }

  auto batches = [&](const std::vector<TokenSequence>& seqs) {
    std::vector<EncodedSequence> enc;
    for (const auto& s : seqs) enc.push_back(encode_ids(s, ck->vocab));
    return pack(enc, cfg.tokens_per_batch, ck->vocab);
  };
  const auto train_batches = batches(corpus.train);
  const auto eval_batches = batches(corpus.eval);

  TrainHooks hooks;
  hooks.out_dir = out_dir;
  run.result = train(*ck, train_batches, eval_batches, cfg, hooks);
  run.train_sequences = corpus.train.size();
  run.eval_sequences = corpus.eval.size();
  run.dropped_short = corpus.dropped_short;
  run.dropped_invalid = corpus.dropped_invalid;
  run.truncated = corpus.truncated;
  run.vocab_size = ck->vocab.size();
  run.parameters = ck->model.parameter_count();
  return run;
}

PrefixBuild cohort_prefixes(std::span<const PatientRecord> records, std::span<const LabeledIndex> cohort,
                            const CodecConfig& codec, const Vocabulary& vocab, size_t context_window, size_t reserve) {
  if (context_window <= reserve) throw ValidationError("context window leaves no room for the prefix");
  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& r : records) by_id[r.person_id] = &r;
  PrefixBuild out;
  out.ids.resize(cohort.size());
  for (size_t i = 0; i < cohort.size(); ++i) {
    auto it = by_id.find(cohort[i].person_id);
    if (it == by_id.end()) {
      ++out.skipped;
      continue;
    }
    TokenSequence seq;
    try {
      seq = prefix_sequence(*it->second, cohort[i].index_date, codec);
    } catch (const ValidationError&) {
      ++out.skipped;
      continue;
    }
    std::vector<TokenId> ids;
    bool usable = true;
    for (const auto& tok : seq.tokens) {
      if (auto id = vocab.find(tok)) {
        ids.push_back(*id);
        continue;
      }
      const TokenClass c = classify(tok);
      if (c == TokenClass::Concept || c == TokenClass::IntraAtt) {
        ++out.dropped_tokens;
      } else {
        usable = false;
        break;
      }
    }
    if (!usable) {
      ++out.skipped;
      continue;
    }
    const size_t room = context_window - reserve;
    if (ids.size() > room) ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(room));
    out.ids[i] = std::move(ids);
  }
  return out;
}

std::string ZeroShotRun::predictions_csv() const {
  std::ostringstream o;
  o.precision(8);
  o << "person_id,label,probability,positives,completed,censored,attempts,cap_reached\n";
  for (size_t i = 0; i < members.size(); ++i) {
    const auto& s = evaluation.simulations[i];
    o << members[i].person_id << ',' << members[i].label << ',' << s.probability << ',' << s.positives << ','
      << s.completed << ',' << s.censored << ',' << s.attempts << ',' << (s.cap_reached ? 1 : 0) << '\n';
  }
  return o.str();
}

ZeroShotRun zeroshot_from_records(const Checkpoint& ck, const TaskConfig& task, const ConceptAncestry* ancestry,
                                  std::span<const PatientRecord> records, std::span<const LabeledIndex> cohort,
                                  const CodecConfig& codec, uint64_t seed, size_t n_bootstrap, unsigned threads) {
  task.validate();
  const auto meanings = token_meanings(ck.vocab, expand_outcomes(task, ancestry));
  PrefixBuild prefixes =
      cohort_prefixes(records, cohort, codec, ck.vocab, ck.model.config().context_window, task.max_new_tokens);
  ZeroShotRun run;
  run.skipped = prefixes.skipped;
  for (size_t i = 0; i < cohort.size(); ++i)
    if (!prefixes.ids[i].empty()) run.members.push_back({cohort[i].person_id, std::move(prefixes.ids[i]), cohort[i].label});
  if (run.members.empty()) throw ValidationError("zero-shot cohort has no usable members");
  ModelDecoder decoder(ck.model);
  run.evaluation = evaluate_task(decoder, run.members, meanings, task, seed, n_bootstrap, threads);
  return run;
}

ProbeResult probe_from_records(const Checkpoint& ck, std::span<const PatientRecord> records,
                               std::span<const LabeledIndex> train, std::span<const LabeledIndex> test,
                               const CodecConfig& codec, const LogisticOptions& opts, size_t n_bootstrap,
                               uint64_t seed, unsigned threads) {
  auto examples = [&](std::span<const LabeledIndex> cohort) {
    PrefixBuild p = cohort_prefixes(records, cohort, codec, ck.vocab, ck.model.config().context_window + 1, 1);
    std::vector<ProbeExample> out;
    for (size_t i = 0; i < cohort.size(); ++i)
      if (!p.ids[i].empty()) out.push_back({std::move(p.ids[i]), cohort[i].label});
    return out;
  };
  const auto tr = examples(train), te = examples(test);
  if (tr.empty() || te.empty()) throw ValidationError("probe cohorts have no usable members");
  return linear_probe(ck.model, tr, te, opts, n_bootstrap, seed, threads);
}

void ToyGradCheckConfig::validate() const {
  if (embed_dim == 0 || embed_dim % 3 != 0) throw ValidationError("gradcheck: embed_dim must be a positive multiple of 3");
  if (n_heads == 0 || embed_dim % n_heads != 0) throw ValidationError("gradcheck: n_heads must divide embed_dim");
  if (n_layers == 0) throw ValidationError("gradcheck: n_layers must be positive");
  if (n_sequences == 0 || seq_len < 2) throw ValidationError("gradcheck: need sequences of at least two tokens");
  if (!(eps > 0)) throw ValidationError("gradcheck: eps must be positive");
}

ToyGradCheckConfig ToyGradCheckConfig::parse(const std::string& yaml_text, const std::string& source) {
  YAML::Node n = parse_yaml(yaml_text, source);
  check_keys(n, {"embed_dim", "n_layers", "n_heads", "n_sequences", "seq_len", "eps", "entries_per_param"}, source);
  ToyGradCheckConfig c;
  c.embed_dim = yaml_get(n, "embed_dim", c.embed_dim, source);
  c.n_layers = yaml_get(n, "n_layers", c.n_layers, source);
  c.n_heads = yaml_get(n, "n_heads", c.n_heads, source);
  c.n_sequences = yaml_get(n, "n_sequences", c.n_sequences, source);
  c.seq_len = yaml_get(n, "seq_len", c.seq_len, source);
  c.eps = yaml_get(n, "eps", c.eps, source);
  c.entries_per_param = yaml_get(n, "entries_per_param", c.entries_per_param, source);
  c.validate();
  return c;
}

ToyGradCheckConfig ToyGradCheckConfig::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

ad::GradCheckResult model_gradcheck(const ToyGradCheckConfig& cfg, uint64_t seed) {
  cfg.validate();
  HospitalConfig hc;
  hc.n_patients = 6;
  hc.seed = seed;
  CodecConfig codec;
  std::vector<TokenSequence> corpus;
  for (const auto& r : generate_hospital(hc)) corpus.push_back(encode_patient(r, codec));
  const Vocabulary vocab = Vocabulary::build(corpus);

  std::vector<TokenId> time_ids, other_ids;
  for (TokenId id = 1; id < static_cast<TokenId>(vocab.size()); ++id)
    (is_att(vocab.token_class(id)) ? time_ids : other_ids).push_back(id);

  Rng rng = make_rng(seed, {0x67726164});
  Batch batch;
  for (size_t s = 0; s < cfg.n_sequences; ++s) {
    std::vector<TokenId> ids;
    for (size_t i = 0; i < cfg.seq_len; ++i) {
      const auto& pool = uniform01(rng) < 0.35 ? time_ids : other_ids;
      ids.push_back(pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)]);
    }
    append_segment(batch, vocab, ids);
  }

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = cfg.embed_dim;
  mc.n_layers = cfg.n_layers;
  mc.n_heads = cfg.n_heads;
  mc.context_window = cfg.seq_len;
  Model model(mc, seed);
  // Move away from the near-zero initialization so every path carries a visible gradient.
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (auto& p : model.parameters())
    for (double& v : p.value.data) v += jitter(rng);

  auto params = model.parameter_ptrs();
  auto build = [&](ad::Graph& g) {
    auto bound = model.bind(g);
    return model.total_loss(g, bound, batch, nullptr).total;
  };
  return ad::grad_check(build, params, cfg.eps, cfg.entries_per_param, seed);
}

}  // namespace ehrgen
