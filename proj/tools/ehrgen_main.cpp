// Command-line front end. Talks to the library only through the C API.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ehrgen/ehrgen.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Carries a C API status out of a subcommand body.
struct ApiError {
  ehrgen_status status;
  std::string message;
};

void check(ehrgen_status s) {
  if (s != EHRGEN_OK) throw ApiError{s, ehrgen_last_error()};
}

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { ehrgen_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Tables {
  ehrgen_tables* t = nullptr;
  ~Tables() { ehrgen_tables_free(t); }
};

struct Ckpt {
  ehrgen_checkpoint* c = nullptr;
  ~Ckpt() { ehrgen_checkpoint_free(c); }
};

void log_kv(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string line;
  for (const auto& [k, v] : kv) {
    if (!line.empty()) line += ' ';
    line += k + '=' + (v.find(' ') == std::string::npos ? v : '"' + v + '"');
  }
  std::cerr << line << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ApiError{EHRGEN_RUNTIME, "cannot write " + path};
  out << text;
  if (!out) throw ApiError{EHRGEN_RUNTIME, "write failed for " + path};
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A persons/visits/events triple, given as a directory or as three files.
struct TableArgs {
  std::string dir, persons, visits, events;

  void add(CLI::App* app, const std::string& prefix, const std::string& what) {
    const std::string p = prefix.empty() ? "" : prefix + "-";
    app->add_option("--" + (prefix.empty() ? std::string("tables") : prefix), dir,
                    "directory holding persons.csv, visits.csv, events.csv (" + what + ")");
    app->add_option("--" + p + "persons", persons, "persons table (" + what + ")");
    app->add_option("--" + p + "visits", visits, "visits table (" + what + ")");
    app->add_option("--" + p + "events", events, "events table (" + what + ")");
  }
  std::array<std::string, 3> paths(const std::string& what) const {
    std::array<std::string, 3> out{persons, visits, events};
    const char* names[3] = {"persons.csv", "visits.csv", "events.csv"};
    for (int i = 0; i < 3; ++i) {
      if (out[i].empty() && !dir.empty()) out[i] = (fs::path(dir) / names[i]).string();
      if (out[i].empty()) throw ApiError{EHRGEN_INVALID, what + ": missing table path (" + names[i] + ")"};
    }
    return out;
  }
};

struct Run {
  std::string command;
  uint64_t seed = 0;
  unsigned threads = 0;
  std::string manifest;
  json config = json::object();
  std::vector<std::string> inputs, outputs;

  void input(const std::string& p) { inputs.push_back(p); }
  void output(const std::string& p) {
    if (!p.empty()) outputs.push_back(p);
  }
  void config_file(const char* key, const std::string& path) {
    if (path.empty()) return;
    input(path);
    config[key] = read_text(path);
  }
  Tables load(const TableArgs& a, const std::string& what) {
    const auto p = a.paths(what);
    for (const auto& f : p) input(f);
    Tables t;
    check(ehrgen_tables_load(p[0].c_str(), p[1].c_str(), p[2].c_str(), &t.t));
    return t;
  }
  void save(const Tables& t, const TableArgs& a, const std::string& what) {
    const auto p = a.paths(what);
    for (const auto& f : p)
      if (fs::path(f).has_parent_path()) fs::create_directories(fs::path(f).parent_path());
    check(ehrgen_tables_save(t.t, p[0].c_str(), p[1].c_str(), p[2].c_str()));
    for (const auto& f : p) output(f);
  }
};

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void write_manifest(const Run& run, int status, double seconds) {
  json hashes = json::object();
  for (const auto& f : run.outputs) {
    uint64_t h = 0;
    if (fs::is_regular_file(f) && ehrgen_file_hash(f.c_str(), &h) == EHRGEN_OK) {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
      hashes[f] = buf;
    }
  }
  json m = {{"subcommand", run.command},  {"version", ehrgen_version()}, {"seed", run.seed},
            {"threads", run.threads},     {"config", run.config},        {"inputs", run.inputs},
            {"outputs", run.outputs},     {"artifact_hashes", hashes},   {"exit_code", status},
            {"wall_clock_seconds", seconds}};
  std::string path = run.manifest;
  if (path.empty())
    path = run.outputs.empty() ? "ehrgen-" + run.command + ".manifest.json" : run.outputs.front() + ".manifest.json";
  try {
    write_text(path, m.dump(2) + "\n");
  } catch (const ApiError& e) {
    log_kv({{"event", "manifest_failed"}, {"message", e.message}});
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-token event-sequence model toolkit"};
  app.set_version_flag("--version", std::string("ehrgen ") + ehrgen_version());
  app.require_subcommand(1);

  Run run;
  app.add_option("--seed", run.seed, "random seed")->capture_default_str();
  app.add_option("--threads", run.threads, "worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--manifest", run.manifest, "run manifest path (default: <first output>.manifest.json)");

  std::map<std::string, std::function<void()>> bodies;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  // synth
  TableArgs synth_out;
  std::string synth_ancestry;
  size_t synth_n = 500;
  {
    auto* s = sub("synth", "write the synthetic hospital fixture as event tables");
    s->add_option("--n", synth_n, "number of persons")->capture_default_str();
    synth_out.add(s, "", "output");
    s->add_option("--ancestry", synth_ancestry, "also write concept ancestry pairs");
    bodies["synth"] = [&] {
      run.config["n"] = synth_n;
      Tables t;
      check(ehrgen_tables_synth_hospital(synth_n, run.seed, &t.t));
      run.save(t, synth_out, "synth");
      if (!synth_ancestry.empty()) {
        check(ehrgen_write_fixture_ancestry(synth_ancestry.c_str()));
        run.output(synth_ancestry);
      }
    };
  }

  // encode
  TableArgs enc_in;
  std::string enc_out, enc_report;
  bool enc_no_intra = false;
  {
    auto* s = sub("encode", "encode event tables into token sequences");
    enc_in.add(s, "", "input");
    s->add_option("--out", enc_out, "sequence file (TSV)")->required();
    s->add_option("--report", enc_report, "ingestion report (JSON)");
    s->add_flag("--no-intra-visit-time", enc_no_intra, "omit elapsed-day tokens inside visits");
    bodies["encode"] = [&] {
      run.config["intra_visit_time"] = !enc_no_intra;
      Tables t = run.load(enc_in, "encode");
      OwnedString rep;
      check(ehrgen_encode(t.t, enc_no_intra ? 0 : 1, enc_out.c_str(), &rep.p));
      run.output(enc_out);
      log_kv({{"event", "encoded"}, {"report", rep.str()}});
      if (!enc_report.empty()) {
        write_text(enc_report, rep.str() + "\n");
        run.output(enc_report);
      }
    };
  }

  // decode
  std::string dec_in;
  TableArgs dec_out;
  {
    auto* s = sub("decode", "decode token sequences back into event tables (strict)");
    s->add_option("--sequences", dec_in, "sequence file")->required();
    dec_out.add(s, "", "output");
    bodies["decode"] = [&] {
      run.input(dec_in);
      Tables t;
      check(ehrgen_decode(dec_in.c_str(), &t.t));
      run.save(t, dec_out, "decode");
    };
  }

  // vocab
  std::string voc_in, voc_out;
  {
    auto* s = sub("vocab", "build the vocabulary of a sequence file");
    s->add_option("--sequences", voc_in, "sequence file")->required();
    s->add_option("--out", voc_out, "vocabulary file")->required();
    bodies["vocab"] = [&] {
      run.input(voc_in);
      check(ehrgen_build_vocab(voc_in.c_str(), voc_out.c_str()));
      run.output(voc_out);
    };
  }

  // train
  TableArgs tr_in;
  std::string tr_cfg, tr_model_cfg, tr_dir;
  bool tr_resume = false;
  {
    auto* s = sub("train", "train a model on event tables");
    tr_in.add(s, "", "input");
    s->add_option("--config", tr_cfg, "training config (YAML)");
    s->add_option("--model-config", tr_model_cfg, "model config (YAML)");
    s->add_option("--out-dir", tr_dir, "checkpoint directory")->required();
    s->add_flag("--resume", tr_resume, "continue from <out-dir>/latest.bin");
    bodies["train"] = [&] {
      run.config_file("train_config", tr_cfg);
      run.config_file("model_config", tr_model_cfg);
      run.config["resume"] = tr_resume;
      Tables t = run.load(tr_in, "train");
      OwnedString summary;
      check(ehrgen_train(t.t, opt(tr_cfg), opt(tr_model_cfg), tr_dir.c_str(), run.seed, tr_resume ? 1 : 0,
                         &summary.p));
      run.output((fs::path(tr_dir) / "latest.bin").string());
      run.output((fs::path(tr_dir) / "loss.csv").string());
      if (fs::exists(fs::path(tr_dir) / "best.bin")) run.output((fs::path(tr_dir) / "best.bin").string());
      write_text((fs::path(tr_dir) / "summary.json").string(), summary.str() + "\n");
      run.output((fs::path(tr_dir) / "summary.json").string());
      log_kv({{"event", "trained"}, {"summary", summary.str()}});
    };
  }

  // generate
  std::string gen_cfg, gen_out, gen_summary;
  {
    auto* s = sub("generate", "sample synthetic sequences from one or more experts");
    s->add_option("--experts", gen_cfg, "experts config (YAML)")->required();
    s->add_option("--out", gen_out, "sequence file")->required();
    s->add_option("--summary", gen_summary, "generation summary (JSON)");
    bodies["generate"] = [&] {
      run.config_file("experts", gen_cfg);
      OwnedString summary;
      check(ehrgen_generate(gen_cfg.c_str(), gen_out.c_str(), run.seed, run.threads, &summary.p));
      run.output(gen_out);
      log_kv({{"event", "generated"}, {"summary", summary.str()}});
      if (!gen_summary.empty()) {
        write_text(gen_summary, summary.str() + "\n");
        run.output(gen_summary);
      }
    };
  }

  // convert
  std::string conv_in, conv_report, conv_stats;
  TableArgs conv_out;
  {
    auto* s = sub("convert", "convert generated sequences into event tables, counting failures");
    s->add_option("--sequences", conv_in, "sequence file")->required();
    conv_out.add(s, "", "output");
    s->add_option("--report", conv_report, "conversion report (CSV)");
    s->add_option("--summary", conv_stats, "summary statistics (CSV)");
    bodies["convert"] = [&] {
      run.input(conv_in);
      Tables t;
      OwnedString rep;
      check(ehrgen_convert(conv_in.c_str(), &t.t, &rep.p));
      run.save(t, conv_out, "convert");
      if (!conv_report.empty()) {
        write_text(conv_report, rep.str());
        run.output(conv_report);
      } else {
        std::cout << rep.str();
      }
      if (!conv_stats.empty()) {
        OwnedString csv;
        check(ehrgen_summary_stats(t.t, "synthetic", &csv.p));
        write_text(conv_stats, csv.str());
        run.output(conv_stats);
      }
    };
  }

  // summary
  TableArgs sum_in;
  std::string sum_label = "data", sum_out;
  {
    auto* s = sub("summary", "summary statistics of event tables");
    sum_in.add(s, "", "input");
    s->add_option("--label", sum_label, "dataset label")->capture_default_str();
    s->add_option("--out", sum_out, "CSV output (default: stdout)");
    bodies["summary"] = [&] {
      Tables t = run.load(sum_in, "summary");
      OwnedString csv;
      check(ehrgen_summary_stats(t.t, sum_label.c_str(), &csv.p));
      write_text(sum_out, csv.str());
      run.output(sum_out);
    };
  }

  // cohort
  TableArgs coh_in;
  std::string coh_cfg, coh_out;
  {
    auto* s = sub("cohort", "label an outcome cohort (person_id,index_date,label)");
    coh_in.add(s, "", "input");
    s->add_option("--config", coh_cfg, "cohort definition (YAML)")->required();
    s->add_option("--out", coh_out, "cohort file")->required();
    bodies["cohort"] = [&] {
      run.config_file("cohort", coh_cfg);
      Tables t = run.load(coh_in, "cohort");
      size_t n = 0;
      check(ehrgen_outcome_cohort(t.t, coh_cfg.c_str(), coh_out.c_str(), &n));
      run.output(coh_out);
      log_kv({{"event", "cohort"}, {"members", std::to_string(n)}});
    };
  }

  // zeroshot
  TableArgs zs_in;
  std::string zs_task, zs_model, zs_cohort, zs_ancestry, zs_out, zs_metrics;
  size_t zs_boot = 1000;
  {
    auto* s = sub("zeroshot", "Monte-Carlo outcome probabilities from simulated continuations");
    s->add_option("--task", zs_task, "task config (YAML)")->required();
    s->add_option("--model", zs_model, "checkpoint")->required();
    s->add_option("--cohort", zs_cohort, "cohort file")->required();
    zs_in.add(s, "", "input");
    s->add_option("--ancestry", zs_ancestry, "concept ancestry (CSV)");
    s->add_option("--bootstrap", zs_boot, "bootstrap resamples")->capture_default_str();
    s->add_option("--out", zs_out, "per-person predictions (CSV)")->required();
    s->add_option("--metrics", zs_metrics, "AUROC/AUPRC summary (CSV)");
    bodies["zeroshot"] = [&] {
      run.config_file("task", zs_task);
      run.config["bootstrap"] = zs_boot;
      for (const auto* p : {&zs_model, &zs_cohort}) run.input(*p);
      if (!zs_ancestry.empty()) run.input(zs_ancestry);
      Ckpt ck;
      check(ehrgen_checkpoint_load(zs_model.c_str(), &ck.c));
      Tables t = run.load(zs_in, "zeroshot");
      OwnedString pred, met;
      check(ehrgen_zeroshot(ck.c, zs_task.c_str(), t.t, zs_cohort.c_str(), opt(zs_ancestry), run.seed, zs_boot,
                            run.threads, &pred.p, &met.p));
      write_text(zs_out, pred.str());
      run.output(zs_out);
      write_text(zs_metrics, met.str());
      run.output(zs_metrics);
    };
  }

  // probe
  TableArgs pr_in;
  std::string pr_model, pr_train, pr_test, pr_out;
  double pr_l2 = 0.0;
  size_t pr_boot = 1000;
  {
    auto* s = sub("probe", "linear probe on frozen representations");
    s->add_option("--model", pr_model, "checkpoint")->required();
    s->add_option("--train-cohort", pr_train, "training cohort file")->required();
    s->add_option("--test-cohort", pr_test, "test cohort file")->required();
    pr_in.add(s, "", "input");
    s->add_option("--l2", pr_l2, "L2 penalty")->capture_default_str();
    s->add_option("--bootstrap", pr_boot, "bootstrap resamples")->capture_default_str();
    s->add_option("--out", pr_out, "metrics (CSV, default: stdout)");
    bodies["probe"] = [&] {
      run.config["l2"] = pr_l2;
      run.config["bootstrap"] = pr_boot;
      for (const auto* p : {&pr_model, &pr_train, &pr_test}) run.input(*p);
      Ckpt ck;
      check(ehrgen_checkpoint_load(pr_model.c_str(), &ck.c));
      Tables t = run.load(pr_in, "probe");
      OwnedString met;
      check(ehrgen_probe(ck.c, t.t, pr_train.c_str(), pr_test.c_str(), pr_l2, run.seed, pr_boot, run.threads,
                         &met.p));
      write_text(pr_out, met.str());
      run.output(pr_out);
    };
  }

  // prevalence
  TableArgs prev_real, prev_synth;
  std::string prev_out;
  {
    auto* s = sub("prevalence", "per-concept prevalence, real versus synthetic");
    prev_real.add(s, "real", "real data");
    prev_synth.add(s, "synthetic", "synthetic data");
    s->add_option("--out", prev_out, "CSV output (default: stdout)");
    bodies["prevalence"] = [&] {
      Tables a = run.load(prev_real, "prevalence real");
      Tables b = run.load(prev_synth, "prevalence synthetic");
      OwnedString csv;
      check(ehrgen_prevalence(a.t, b.t, &csv.p));
      write_text(prev_out, csv.str());
      run.output(prev_out);
    };
  }

  // pathway
  TableArgs pw_in;
  std::string pw_cfg, pw_out;
  {
    auto* s = sub("pathway", "treatment pathway cohort membership");
    pw_in.add(s, "", "input");
    s->add_option("--config", pw_cfg, "cohort definition (YAML)")->required();
    s->add_option("--out", pw_out, "member list (CSV, default: stdout)");
    bodies["pathway"] = [&] {
      run.config_file("cohort", pw_cfg);
      Tables t = run.load(pw_in, "pathway");
      OwnedString csv;
      double prevalence = 0.0;
      check(ehrgen_pathway(t.t, pw_cfg.c_str(), &csv.p, &prevalence));
      write_text(pw_out, csv.str());
      run.output(pw_out);
      log_kv({{"event", "pathway"}, {"prevalence", std::to_string(prevalence)}});
    };
  }

  // privacy
  TableArgs pv_train, pv_eval, pv_synth;
  std::string pv_cfg, pv_out;
  {
    auto* s = sub("privacy", "privacy attacks against a synthetic dataset");
    pv_train.add(s, "train", "training data");
    pv_eval.add(s, "eval", "held-out data");
    pv_synth.add(s, "synthetic", "synthetic data");
    s->add_option("--config", pv_cfg, "attack config (YAML)");
    s->add_option("--out", pv_out, "scores (CSV, default: stdout)");
    bodies["privacy"] = [&] {
      run.config_file("privacy", pv_cfg);
      Tables a = run.load(pv_train, "privacy train");
      Tables b = run.load(pv_eval, "privacy eval");
      Tables c = run.load(pv_synth, "privacy synthetic");
      OwnedString csv;
      int passed = 0;
      check(ehrgen_privacy(a.t, b.t, c.t, opt(pv_cfg), run.seed, run.threads, &csv.p, &passed));
      write_text(pv_out, csv.str());
      run.output(pv_out);
      log_kv({{"event", "privacy"}, {"result", passed ? "PASS" : "FAIL"}});
    };
  }

  // simstudy
  std::string ss_out, ss_summary;
  uint64_t ss_steps = 0;
  {
    auto* s = sub("simstudy", "time-token versus summation encoder comparison");
    s->add_option("--steps", ss_steps, "training steps (0 = default 20000)")->capture_default_str();
    s->add_option("--out", ss_out, "accuracy curves (CSV)")->required();
    s->add_option("--summary", ss_summary, "summary (JSON)");
    bodies["simstudy"] = [&] {
      run.config["steps"] = ss_steps;
      size_t mismatches = 0;
      check(ehrgen_handcrafted_mismatches(&mismatches));
      log_kv({{"event", "handcrafted"}, {"mismatches", std::to_string(mismatches)}});
      OwnedString curves, summary;
      check(ehrgen_simstudy(run.seed, ss_steps, run.threads, &curves.p, &summary.p));
      write_text(ss_out, curves.str());
      run.output(ss_out);
      log_kv({{"event", "simstudy"}, {"summary", summary.str()}});
      if (!ss_summary.empty()) {
        write_text(ss_summary, summary.str() + "\n");
        run.output(ss_summary);
      }
    };
  }

  // gradcheck
  std::string gc_cfg;
  double gc_tol = 1e-4;
  {
    auto* s = sub("gradcheck", "finite-difference check of the training loss gradient");
    s->add_option("--config", gc_cfg, "toy model config (YAML)");
    s->add_option("--tolerance", gc_tol, "maximum relative error")->capture_default_str();
    bodies["gradcheck"] = [&] {
      run.config_file("toy", gc_cfg);
      double err = 0.0;
      check(ehrgen_gradcheck(opt(gc_cfg), run.seed, &err));
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3e", err);
      const bool ok = err < gc_tol;
      log_kv({{"event", "gradcheck"}, {"max_rel_error", buf}, {"result", ok ? "PASS" : "FAIL"}});
      if (!ok) throw ApiError{EHRGEN_RUNTIME, std::string("max relative error ") + buf + " exceeds tolerance"};
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    app.exit(e);
    return 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  run.command = chosen->get_name();
  const auto t0 = std::chrono::steady_clock::now();
  log_kv({{"event", "start"}, {"cmd", run.command}, {"seed", std::to_string(run.seed)}});
  int status = 0;
  try {
    bodies.at(run.command)();
  } catch (const ApiError& e) {
    status = e.status == EHRGEN_INVALID ? 1 : 2;
    log_kv({{"event", "error"}, {"cmd", run.command}, {"message", e.message}});
    std::cerr << "error: " << e.message << '\n';
  } catch (const std::exception& e) {
    status = 2;
    std::cerr << "error: " << e.what() << '\n';
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(run, status, secs);
  log_kv({{"event", "done"}, {"cmd", run.command}, {"exit", std::to_string(status)},
          {"elapsed_s", std::to_string(secs)}});
  return status;
}
