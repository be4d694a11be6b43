#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "doctest.h"
#include "ehrgen/ehrgen.h"

namespace fs = std::filesystem;

namespace {

struct Dir {
  fs::path path;
  Dir() {
    path = fs::temp_directory_path() / ("ehrgen-capi-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string take(char* s) {
  std::string out = s ? s : "";
  ehrgen_string_free(s);
  return out;
}

size_t lines(const std::string& s) {
  size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("errors are reported through status codes and the thread's last error") {
  CHECK(std::string(ehrgen_version()).size() > 0);
  ehrgen_tables* t = nullptr;
  CHECK(ehrgen_tables_load("/nonexistent/p.csv", "/nonexistent/v.csv", "/nonexistent/e.csv", &t) == EHRGEN_INVALID);
  CHECK(t == nullptr);
  CHECK(std::string(ehrgen_last_error()).find("/nonexistent/p.csv") != std::string::npos);
  CHECK(ehrgen_tables_person_count(nullptr, nullptr) == EHRGEN_INVALID);

  Dir dir;
  write(dir / "seq.tsv", "person_id\ttokens\n1\t[year:2001] [age:3] [gender:1] [race:2] [VS] [VT:9202] [C:5]\n");
  CHECK(ehrgen_decode((dir / "seq.tsv").c_str(), &t) == EHRGEN_INVALID);
  const std::string err = ehrgen_last_error();
  CHECK(err.find("missing_end") != std::string::npos);

  write(dir / "bad.yaml", "embed_dim: [oops\n");
  double rel = 0;
  CHECK(ehrgen_gradcheck((dir / "bad.yaml").c_str(), 0, &rel) == EHRGEN_INVALID);

  ehrgen_tables_free(nullptr);
  ehrgen_checkpoint_free(nullptr);
  ehrgen_string_free(nullptr);
}

TEST_CASE("end-to-end pipeline through the C API") {
  Dir dir;
  ehrgen_tables* real = nullptr;
  REQUIRE(ehrgen_tables_synth_hospital(80, 3, &real) == EHRGEN_OK);
  size_t n = 0;
  CHECK(ehrgen_tables_person_count(real, &n) == EHRGEN_OK);
  CHECK(n == 80);

  REQUIRE(ehrgen_tables_save(real, (dir / "p.csv").c_str(), (dir / "v.csv").c_str(), (dir / "e.csv").c_str()) ==
          EHRGEN_OK);
  ehrgen_tables* loaded = nullptr;
  REQUIRE(ehrgen_tables_load((dir / "p.csv").c_str(), (dir / "v.csv").c_str(), (dir / "e.csv").c_str(), &loaded) ==
          EHRGEN_OK);
  uint64_t h1 = 0, h2 = 0;
  REQUIRE(ehrgen_tables_save(loaded, (dir / "p2.csv").c_str(), (dir / "v2.csv").c_str(), (dir / "e2.csv").c_str()) ==
          EHRGEN_OK);
  ehrgen_file_hash((dir / "e.csv").c_str(), &h1);
  ehrgen_file_hash((dir / "e2.csv").c_str(), &h2);
  CHECK(h1 == h2);

  char* report = nullptr;
  REQUIRE(ehrgen_encode(real, 1, (dir / "seq.tsv").c_str(), &report) == EHRGEN_OK);
  CHECK(take(report).find("\"sequences\":80") != std::string::npos);
  ehrgen_tables* decoded = nullptr;
  REQUIRE(ehrgen_decode((dir / "seq.tsv").c_str(), &decoded) == EHRGEN_OK);
  CHECK(ehrgen_tables_person_count(decoded, &n) == EHRGEN_OK);
  CHECK(n == 80);
  REQUIRE(ehrgen_build_vocab((dir / "seq.tsv").c_str(), (dir / "vocab.txt").c_str()) == EHRGEN_OK);
  CHECK(fs::file_size(dir / "vocab.txt") > 0);

  write(dir / "train.yaml", "max_steps: 6\ntokens_per_batch: 2048\nwarmup_steps: 2\nmin_seq_tokens: 5\n");
  write(dir / "model.yaml", "embed_dim: 12\nn_layers: 1\nn_heads: 2\ncontext_window: 256\n");
  char* summary = nullptr;
  REQUIRE(ehrgen_train(real, (dir / "train.yaml").c_str(), (dir / "model.yaml").c_str(), (dir / "run").c_str(), 1, 0,
                       &summary) == EHRGEN_OK);
  CHECK(take(summary).find("\"steps\":6") != std::string::npos);
  ehrgen_checkpoint* ck = nullptr;
  REQUIRE(ehrgen_checkpoint_load((dir / "run/latest.bin").c_str(), &ck) == EHRGEN_OK);
  char* info = nullptr;
  REQUIRE(ehrgen_checkpoint_info(ck, &info) == EHRGEN_OK);
  CHECK(take(info).find("\"embed_dim\":12") != std::string::npos);

  write(dir / "experts.yaml", "experts:\n  - name: a\n    checkpoint: " + (dir / "run/latest.bin") +
                                  "\n    count: 6\n    max_tokens: 60\n    min_tokens: 0\n"
                                  "  - name: b\n    checkpoint: " + (dir / "run/latest.bin") +
                                  "\n    count: 4\n    top_k: 20\n    max_tokens: 60\n    min_tokens: 0\n");
  REQUIRE(ehrgen_generate((dir / "experts.yaml").c_str(), (dir / "gen.tsv").c_str(), 5, 2, &summary) == EHRGEN_OK);
  CHECK(take(summary).find("\"generated\":[6,4]") != std::string::npos);
  uint64_t g1 = 0, g2 = 0;
  ehrgen_file_hash((dir / "gen.tsv").c_str(), &g1);
  REQUIRE(ehrgen_generate((dir / "experts.yaml").c_str(), (dir / "gen2.tsv").c_str(), 5, 1, nullptr) == EHRGEN_OK);
  ehrgen_file_hash((dir / "gen2.tsv").c_str(), &g2);
  CHECK(g1 == g2);

  ehrgen_tables* synth = nullptr;
  char* conv = nullptr;
  REQUIRE(ehrgen_convert((dir / "gen.tsv").c_str(), &synth, &conv) == EHRGEN_OK);
  CHECK(take(conv).rfind("outcome,count,fraction\nattempted,10,1\n", 0) == 0);

  char* csv = nullptr;
  REQUIRE(ehrgen_summary_stats(real, "real", &csv) == EHRGEN_OK);
  CHECK(lines(take(csv)) == 2);
  REQUIRE(ehrgen_prevalence(real, decoded, &csv) == EHRGEN_OK);
  CHECK(lines(take(csv)) > 10);

  write(dir / "cohort.yaml",
        "name: htn\nindex_concepts: [316866]\nlookback_days: 0\noutcome_concepts: [9201]\noutcome_window_days: 730\n");
  size_t members = 0;
  REQUIRE(ehrgen_outcome_cohort(real, (dir / "cohort.yaml").c_str(), (dir / "cohort.csv").c_str(), &members) ==
          EHRGEN_OK);
  CHECK(members > 5);
  write(dir / "task.yaml",
        "task_name: admit\noutcome_events: ['9201']\nprediction_window_start: 0\nprediction_window_end: 730\n"
        "max_new_tokens: 24\nn_simulations: 4\n");
  REQUIRE(ehrgen_write_fixture_ancestry((dir / "anc.csv").c_str()) == EHRGEN_OK);
  char *pred = nullptr, *metrics = nullptr;
  REQUIRE(ehrgen_zeroshot(ck, (dir / "task.yaml").c_str(), real, (dir / "cohort.csv").c_str(),
                          (dir / "anc.csv").c_str(), 1, 20, 2, &pred, &metrics) == EHRGEN_OK);
  const std::string p = take(pred);
  CHECK(p.rfind("person_id,label,probability,positives,completed,censored,attempts,cap_reached\n", 0) == 0);
  CHECK(lines(p) == members + 1);
  CHECK(lines(take(metrics)) == 2);

  double prevalence = -1;
  write(dir / "path.yaml", "name: htn\nindex_concepts: [316866]\nlookback_days: 0\ninterval_days: 365\nrepetitions: 1\n");
  REQUIRE(ehrgen_pathway(real, (dir / "path.yaml").c_str(), &csv, &prevalence) == EHRGEN_OK);
  take(csv);
  CHECK(prevalence > 0.0);
  CHECK(prevalence <= 1.0);

  int passed = -1;
  write(dir / "privacy.yaml", "sample_size: 20\n");
  ehrgen_tables* holdout = nullptr;
  REQUIRE(ehrgen_tables_synth_hospital(80, 4, &holdout) == EHRGEN_OK);
  REQUIRE(ehrgen_privacy(real, holdout, real, (dir / "privacy.yaml").c_str(), 0, 1, &csv, &passed) == EHRGEN_OK);
  CHECK(take(csv).find("overall,,,FAIL") != std::string::npos);  // synthetic data that copies the training set
  CHECK(passed == 0);

  ehrgen_checkpoint_free(ck);
  ehrgen_tables_free(real);
  ehrgen_tables_free(loaded);
  ehrgen_tables_free(decoded);
  ehrgen_tables_free(synth);
  ehrgen_tables_free(holdout);
}

TEST_CASE("checks exposed for the command line") {
  size_t mismatches = 99;
  CHECK(ehrgen_handcrafted_mismatches(&mismatches) == EHRGEN_OK);
  CHECK(mismatches == 0);
  double rel = 1;
  CHECK(ehrgen_gradcheck(nullptr, 0, &rel) == EHRGEN_OK);
  CHECK(rel < 1e-4);
  char *curves = nullptr, *summary = nullptr;
  REQUIRE(ehrgen_simstudy(0, 100, 1, &curves, &summary) == EHRGEN_OK);
  CHECK(lines(take(curves)) == 3);
  CHECK(take(summary).find("base_rate") != std::string::npos);
}
