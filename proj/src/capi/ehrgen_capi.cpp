#include "ehrgen/ehrgen.h"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <sstream>

#include "codec/codec.hpp"
#include "codec/tables.hpp"
#include "codec/vocabulary.hpp"
#include "common/csv.hpp"
#include "common/errors.hpp"
#include "common/hash.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"
#include "eval/harness.hpp"
#include "fixtures/hospital.hpp"
#include "generator/generator.hpp"
#include "generator/sampler.hpp"
#include "json.hpp"
#include "model/checkpoint.hpp"
#include "pipeline/pipeline.hpp"
#include "privacy/privacy.hpp"
#include "simstudy/simstudy.hpp"
#include "zeroshot/zeroshot.hpp"

struct ehrgen_tables {
  ehrgen::EventTables tables;
};

struct ehrgen_checkpoint {
  ehrgen::Checkpoint ck;
};

namespace {

using ehrgen::ValidationError;
using json = nlohmann::json;

thread_local std::string g_last_error;

template <class Fn>
ehrgen_status guard(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return EHRGEN_OK;
  } catch (const ValidationError& e) {
    g_last_error = e.what();
    return EHRGEN_INVALID;
  } catch (const ehrgen::DecodeError& e) {
    g_last_error = e.what();
    return EHRGEN_INVALID;
  } catch (const YAML::Exception& e) {
    g_last_error = e.what();
    return EHRGEN_INVALID;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EHRGEN_RUNTIME;
  } catch (...) {
    g_last_error = "unknown failure";
    return EHRGEN_RUNTIME;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ValidationError(std::string(what) + " must not be null");
}

void put(char** out, const std::string& s) {
  if (!out) return;
  char* buf = static_cast<char*>(std::malloc(s.size() + 1));
  if (!buf) throw std::bad_alloc();
  std::memcpy(buf, s.c_str(), s.size() + 1);
  *out = buf;
}

unsigned thread_count(unsigned threads) { return threads ? threads : ehrgen::default_threads(); }

std::vector<ehrgen::PatientRecord> records_of(const ehrgen_tables* t) {
  return ehrgen::records_from_tables(t->tables, ehrgen::CodecConfig{});
}

std::vector<ehrgen::TokenSequence> sequences_of(const char* path) {
  std::vector<ehrgen::TokenSequence> out;
  for (auto& row : ehrgen::read_sequence_file(path)) out.push_back(std::move(row.sequence));
  return out;
}

}  // namespace

extern "C" {

const char* ehrgen_version(void) { return EHRGEN_VERSION; }
const char* ehrgen_last_error(void) { return g_last_error.c_str(); }
void ehrgen_string_free(char* s) { std::free(s); }

ehrgen_status ehrgen_file_hash(const char* path, uint64_t* out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = ehrgen::fnv1a64(ehrgen::read_file(path));
  });
}

ehrgen_status ehrgen_tables_load(const char* persons_csv, const char* visits_csv, const char* events_csv,
                                 ehrgen_tables** out) {
  return guard([&] {
    require(persons_csv, "persons path");
    require(visits_csv, "visits path");
    require(events_csv, "events path");
    require(out, "out");
    *out = new ehrgen_tables{ehrgen::EventTables::load(persons_csv, visits_csv, events_csv)};
  });
}

ehrgen_status ehrgen_tables_save(const ehrgen_tables* t, const char* persons_csv, const char* visits_csv,
                                 const char* events_csv) {
  return guard([&] {
    require(t, "tables");
    require(persons_csv, "persons path");
    require(visits_csv, "visits path");
    require(events_csv, "events path");
    t->tables.save(persons_csv, visits_csv, events_csv);
  });
}

ehrgen_status ehrgen_tables_synth_hospital(size_t n_persons, uint64_t seed, ehrgen_tables** out) {
  return guard([&] {
    require(out, "out");
    if (n_persons == 0) throw ValidationError("n_persons must be positive");
    ehrgen::HospitalConfig cfg;
    cfg.n_patients = n_persons;
    cfg.seed = seed;
    *out = new ehrgen_tables{ehrgen::tables_from_records(ehrgen::generate_hospital(cfg))};
  });
}

ehrgen_status ehrgen_tables_person_count(const ehrgen_tables* t, size_t* out) {
  return guard([&] {
    require(t, "tables");
    require(out, "out");
    *out = t->tables.persons.size();
  });
}

void ehrgen_tables_free(ehrgen_tables* t) { delete t; }

ehrgen_status ehrgen_write_fixture_ancestry(const char* path) {
  return guard([&] {
    require(path, "path");
    std::ostringstream o;
    o << "ancestor_id,descendant_id\n";
    for (const auto& [a, d] : ehrgen::hospital_ancestry()) o << a << ',' << d << '\n';
    ehrgen::write_file_atomic(path, o.str());
  });
}

ehrgen_status ehrgen_encode(const ehrgen_tables* t, int intra_visit_time, const char* out_sequences,
                            char** report_json) {
  return guard([&] {
    require(t, "tables");
    require(out_sequences, "output path");
    ehrgen::CodecConfig codec;
    codec.intra_visit_time = intra_visit_time != 0;
    ehrgen::IngestReport ingest;
    const auto records = ehrgen::records_from_tables(t->tables, codec, &ingest);
    std::vector<ehrgen::SequenceFileRow> rows;
    size_t tokens = 0;
    for (const auto& r : records) {
      rows.push_back({ehrgen::encode_patient(r, codec), {}});
      tokens += rows.back().sequence.tokens.size();
    }
    ehrgen::write_sequence_file(out_sequences, rows);
    json j = {{"sequences", rows.size()},
              {"tokens", tokens},
              {"persons_without_visits", ingest.persons_without_visits},
              {"unknown_concept_events", ingest.unknown_concept_events},
              {"filled_discharge", ingest.filled_discharge},
              {"dropped_discharge", ingest.dropped_discharge}};
    put(report_json, j.dump());
  });
}

ehrgen_status ehrgen_decode(const char* sequences, ehrgen_tables** out) {
  return guard([&] {
    require(sequences, "sequence path");
    require(out, "out");
    std::vector<ehrgen::PatientRecord> records;
    for (const auto& s : sequences_of(sequences)) {
      try {
        records.push_back(ehrgen::decode_sequence(s, ehrgen::CodecConfig{}, {}));
      } catch (const ehrgen::DecodeError& e) {
        throw ValidationError("person " + s.person_id + ": " + e.what());
      }
    }
    *out = new ehrgen_tables{ehrgen::tables_from_records(records)};
  });
}

ehrgen_status ehrgen_convert(const char* sequences, ehrgen_tables** out, char** report_csv) {
  return guard([&] {
    require(sequences, "sequence path");
    require(out, "out");
    const auto conv = ehrgen::convert_to_tables(sequences_of(sequences), ehrgen::CodecConfig{});
    put(report_csv, conv.report.to_csv());
    *out = new ehrgen_tables{conv.tables};
  });
}

ehrgen_status ehrgen_build_vocab(const char* sequences, const char* out_vocab) {
  return guard([&] {
    require(sequences, "sequence path");
    require(out_vocab, "vocabulary path");
    ehrgen::Vocabulary::build(sequences_of(sequences)).save(out_vocab);
  });
}

ehrgen_status ehrgen_train(const ehrgen_tables* t, const char* train_config, const char* model_config,
                           const char* out_dir, uint64_t seed, int resume, char** summary_json) {
  return guard([&] {
    require(t, "tables");
    require(out_dir, "output directory");
    ehrgen::TrainConfig cfg = train_config ? ehrgen::TrainConfig::load(train_config) : ehrgen::TrainConfig{};
    cfg.seed = seed;
    ehrgen::ModelConfig mc = model_config ? ehrgen::load_model_config(model_config) : ehrgen::ModelConfig{};
    const auto records = records_of(t);
    const auto run = ehrgen::train_from_records(records, ehrgen::CodecConfig{}, mc, cfg, out_dir, resume != 0);
    json j = {{"steps", run.result.steps},
              {"early_stopped", run.result.early_stopped},
              {"best_eval", run.result.best_eval},
              {"last_eval_loss", run.result.last_eval.loss},
              {"last_eval_ntp", run.result.last_eval.ntp_per_target},
              {"train_sequences", run.train_sequences},
              {"eval_sequences", run.eval_sequences},
              {"dropped_short", run.dropped_short},
              {"dropped_invalid", run.dropped_invalid},
              {"truncated", run.truncated},
              {"vocab_size", run.vocab_size},
              {"parameters", run.parameters},
              {"resumed", run.resumed}};
    put(summary_json, j.dump());
  });
}

ehrgen_status ehrgen_checkpoint_load(const char* path, ehrgen_checkpoint** out) {
  return guard([&] {
    require(path, "checkpoint path");
    require(out, "out");
    *out = new ehrgen_checkpoint{ehrgen::Checkpoint::load(path)};
  });
}

ehrgen_status ehrgen_checkpoint_info(const ehrgen_checkpoint* ck, char** info_json) {
  return guard([&] {
    require(ck, "checkpoint");
    const auto& c = ck->ck.model.config();
    json j = {{"vocab_size", c.vocab_size},
              {"embed_dim", c.embed_dim},
              {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},
              {"context_window", c.context_window},
              {"parameters", ck->ck.model.parameter_count()},
              {"global_step", ck->ck.trainer.global_step},
              {"seed", ck->ck.seed},
              {"weights_hash", ck->ck.model.weights_hash()}};
    put(info_json, j.dump());
  });
}

void ehrgen_checkpoint_free(ehrgen_checkpoint* ck) { delete ck; }

ehrgen_status ehrgen_generate(const char* experts_config, const char* out_sequences, uint64_t seed, unsigned threads,
                              char** summary_json) {
  return guard([&] {
    require(experts_config, "experts config");
    require(out_sequences, "output path");
    auto specs = ehrgen::load_experts(experts_config);
    std::map<std::string, std::unique_ptr<ehrgen::Checkpoint>> ckpts;
    std::map<std::string, std::unique_ptr<ehrgen::ModelDecoder>> decoders;
    std::vector<ehrgen::Expert> experts;
    const ehrgen::Vocabulary* vocab = nullptr;
    for (auto& spec : specs) {
      const std::string& path = spec.sampling.checkpoint;
      if (path.empty()) throw ValidationError("expert '" + spec.sampling.name + "': checkpoint is required");
      if (!ckpts.count(path)) {
        ckpts[path] = std::make_unique<ehrgen::Checkpoint>(ehrgen::Checkpoint::load(path));
        decoders[path] = std::make_unique<ehrgen::ModelDecoder>(ckpts[path]->model);
      }
      const auto& ck = *ckpts[path];
      if (vocab && !(*vocab == ck.vocab))
        throw ValidationError("expert '" + spec.sampling.name + "': checkpoints use different vocabularies");
      vocab = &ck.vocab;
      spec.sampling.seed = ehrgen::derive_seed(seed, {spec.sampling.seed});
      experts.push_back({spec, decoders[path].get(), &ck.prompts});
    }
    if (experts.empty()) throw ValidationError(std::string(experts_config) + ": no experts listed");
    const auto pool = ehrgen::generate_pool(experts, *vocab, thread_count(threads));
    ehrgen::write_sequence_file(out_sequences, ehrgen::pool_rows(pool));
    json j = {{"generated", pool.generated}, {"kept", pool.kept}, {"filtered_short", pool.filtered_short}};
    put(summary_json, j.dump());
  });
}

ehrgen_status ehrgen_summary_stats(const ehrgen_tables* t, const char* label, char** csv) {
  return guard([&] {
    require(t, "tables");
    const auto s = ehrgen::summary_stats(t->tables, ehrgen::CodecConfig{});
    put(csv, ehrgen::SummaryStats::csv_header() + s.to_csv(label ? label : "data"));
  });
}

ehrgen_status ehrgen_zeroshot(const ehrgen_checkpoint* ck, const char* task_config, const ehrgen_tables* t,
                              const char* cohort_csv, const char* ancestry_csv, uint64_t seed, size_t n_bootstrap,
                              unsigned threads, char** predictions_csv, char** metrics_csv) {
  return guard([&] {
    require(ck, "checkpoint");
    require(task_config, "task config");
    require(t, "tables");
    require(cohort_csv, "cohort path");
    const auto task = ehrgen::TaskConfig::load(task_config);
    std::optional<ehrgen::ConceptAncestry> ancestry;
    if (ancestry_csv) ancestry = ehrgen::ConceptAncestry::load(ancestry_csv);
    const auto cohort = ehrgen::read_cohort(cohort_csv);
    const auto records = records_of(t);
    const auto run = ehrgen::zeroshot_from_records(ck->ck, task, ancestry ? &*ancestry : nullptr, records, cohort,
                                                   ehrgen::CodecConfig{}, seed, n_bootstrap, thread_count(threads));
    put(predictions_csv, run.predictions_csv());
    put(metrics_csv, ehrgen::ClassificationMetrics::csv_header() + run.evaluation.metrics.to_csv(task.task_name));
  });
}

ehrgen_status ehrgen_probe(const ehrgen_checkpoint* ck, const ehrgen_tables* t, const char* train_cohort_csv,
                           const char* test_cohort_csv, double l2, uint64_t seed, size_t n_bootstrap, unsigned threads,
                           char** metrics_csv) {
  return guard([&] {
    require(ck, "checkpoint");
    require(t, "tables");
    require(train_cohort_csv, "train cohort path");
    require(test_cohort_csv, "test cohort path");
    if (!(l2 >= 0)) throw ValidationError("l2 must be nonnegative");
    ehrgen::LogisticOptions opts;
    opts.l2 = l2;
    const auto records = records_of(t);
    const auto r = ehrgen::probe_from_records(ck->ck, records, ehrgen::read_cohort(train_cohort_csv),
                                              ehrgen::read_cohort(test_cohort_csv), ehrgen::CodecConfig{}, opts,
                                              n_bootstrap, seed, thread_count(threads));
    put(metrics_csv, ehrgen::ClassificationMetrics::csv_header() + r.metrics.to_csv("probe"));
  });
}

ehrgen_status ehrgen_outcome_cohort(const ehrgen_tables* t, const char* cohort_config, const char* out_cohort_csv,
                                    size_t* members) {
  return guard([&] {
    require(t, "tables");
    require(cohort_config, "cohort config");
    require(out_cohort_csv, "output path");
    const auto cohort = ehrgen::outcome_cohort(t->tables, ehrgen::CohortSpec::load(cohort_config));
    ehrgen::write_cohort(out_cohort_csv, cohort);
    if (members) *members = cohort.size();
  });
}

ehrgen_status ehrgen_prevalence(const ehrgen_tables* real, const ehrgen_tables* synthetic, char** csv) {
  return guard([&] {
    require(real, "real tables");
    require(synthetic, "synthetic tables");
    put(csv, ehrgen::prevalence_csv(ehrgen::prevalence_report(real->tables, synthetic->tables, ehrgen::CodecConfig{})));
  });
}

ehrgen_status ehrgen_pathway(const ehrgen_tables* t, const char* cohort_config, char** members_csv,
                             double* prevalence) {
  return guard([&] {
    require(t, "tables");
    require(cohort_config, "cohort config");
    const auto r = ehrgen::pathway_cohort(t->tables, ehrgen::CohortSpec::load(cohort_config));
    std::string s = "person_id\n";
    for (const auto& id : r.members) s += id + "\n";
    put(members_csv, s);
    if (prevalence) *prevalence = r.prevalence;
  });
}

ehrgen_status ehrgen_privacy(const ehrgen_tables* train, const ehrgen_tables* eval, const ehrgen_tables* synthetic,
                             const char* config, uint64_t seed, unsigned threads, char** csv, int* passed) {
  return guard([&] {
    require(train, "train tables");
    require(eval, "eval tables");
    require(synthetic, "synthetic tables");
    ehrgen::PrivacyConfig cfg = config ? ehrgen::PrivacyConfig::load(config) : ehrgen::PrivacyConfig{};
    cfg.seed = seed;
    const ehrgen::EventTables* all[] = {&train->tables, &eval->tables, &synthetic->tables};
    const auto schema = ehrgen::ProfileSchema::build(all);
    const auto tr = ehrgen::profiles_from_tables(train->tables, schema);
    const auto ev = ehrgen::profiles_from_tables(eval->tables, schema);
    const auto sy = ehrgen::profiles_from_tables(synthetic->tables, schema);
    const auto attrs = ehrgen::resolve_attributes(cfg, schema, tr);
    const auto rep = ehrgen::run_privacy_audit(tr, ev, sy, attrs, cfg, thread_count(threads));
    put(csv, rep.to_csv());
    if (passed) *passed = rep.pass() ? 1 : 0;
  });
}

ehrgen_status ehrgen_simstudy(uint64_t seed, uint64_t steps, unsigned threads, char** curves_csv,
                              char** summary_json) {
  return guard([&] {
    ehrgen::EncoderConfig cfg;
    if (steps) cfg.steps = steps;
    const auto c = ehrgen::run_comparison(cfg, seed, thread_count(threads));
    put(curves_csv, c.to_csv());
    json j = {{"base_rate", c.base_rate},
              {"final_timetoken", c.acc_timetoken.back()},
              {"final_sum", c.acc_sum.back()}};
    if (auto k = c.first_reaching(0.99)) {
      j["converged_step"] = c.steps[*k];
      j["sum_at_converged_step"] = c.acc_sum[*k];
    } else {
      j["converged_step"] = nullptr;
    }
    put(summary_json, j.dump());
  });
}

ehrgen_status ehrgen_handcrafted_mismatches(size_t* mismatches) {
  return guard([&] {
    require(mismatches, "out");
    size_t bad = 0;
    for (int x1 = 0; x1 <= 1; ++x1)
      for (int x2 = 0; x2 <= 1; ++x2)
        for (int dt = 0; dt <= ehrgen::kMaxTime; ++dt) {
          const int want = dt <= 7 ? (x1 ^ x2) : (x1 & x2);
          bad += ehrgen::handcrafted_forward(x1, dt, x2).y != want;
        }
    *mismatches = bad;
  });
}

ehrgen_status ehrgen_gradcheck(const char* config, uint64_t seed, double* max_rel_error) {
  return guard([&] {
    require(max_rel_error, "out");
    const auto cfg = config ? ehrgen::ToyGradCheckConfig::load(config) : ehrgen::ToyGradCheckConfig{};
    *max_rel_error = ehrgen::model_gradcheck(cfg, seed).max_rel_error;
  });
}

}  // extern "C"
