#include <fstream>
#include <set>

#include "codec/codec.hpp"
#include "codec/tables.hpp"
#include "codec/vocabulary.hpp"
#include "common/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace ehrgen;
using ehrgen::testing::random_record;
using ehrgen::testing::TempDir;

namespace {

PatientRecord two_visit_record() {
  PatientRecord r;
  r.person_id = "42";
  r.birth_year = 1950;
  r.gender_concept = 8532;
  r.race_concept = 8527;
  Visit a;
  a.visit_concept_id = 9202;
  a.start = a.end = Day::from_ymd(2010, 3, 1);
  a.events = {{201826, Domain::Condition, a.start}, {1503297, Domain::Drug, a.start}};
  Visit b;
  b.visit_concept_id = 9201;
  b.start = Day::from_ymd(2010, 3, 11);
  b.end = Day::from_ymd(2010, 3, 14);
  b.discharge_concept_id = 8536;
  b.events = {{1000, Domain::Condition, b.start}, {2000, Domain::Procedure, Day::from_ymd(2010, 3, 13)}};
  r.visits = {a, b};
  return r;
}

}  // namespace

TEST_CASE("time decomposition worked examples") {
  CHECK(decompose_interval(396) == TimeTriple{1, 1, 1});
  CHECK(decompose_interval(1) == TimeTriple{0, 0, 1});
}

TEST_CASE("time decomposition matches an exhaustive triple search") {
  for (int64_t d = 0; d < 1080; ++d) {
    // Oracle: the triple with the most years, then the most months, that sums to d with days < 30.
    std::optional<TimeTriple> want;
    for (int64_t y = 0; y <= 3; ++y)
      for (int64_t m = 0; m <= 12; ++m)
        for (int64_t dd = 0; dd < 30; ++dd)
          if (365 * y + 30 * m + dd == d && (!want || y > want->years || (y == want->years && m > want->months)))
            want = TimeTriple{y, m, dd};
    REQUIRE(want);
    const TimeTriple got = decompose_interval(d);
    CHECK(got == *want);
    CHECK(got.recompose() == d);
  }
}

TEST_CASE("token surface forms") {
  CHECK(att_token(0) == "D0");
  CHECK(att_token(1080) == "D1080");
  CHECK(att_token(1081) == "[LT]");
  CHECK_THROWS_AS(att_token(-1), ValidationError);
  CHECK(intra_att_token(3) == "i-D3");
  CHECK_THROWS_AS(intra_att_token(0), ValidationError);
  CHECK(concept_token(Domain::Drug, 7) == "[D:7]");

  for (const std::string t : {"[year:2001]", "[age:40]", "[gender:8532]", "[race:8527]", "[VS]", "[VE]", "[VT:9201]",
                              "[DIS:8536]", "D12", "[LT]", "i-D4", "[C:1]", "[D:2]", "[P:3]", "[END]", "[PAD]"}) {
    CAPTURE(t);
    CHECK(parse_token(t).has_value());
  }
  CHECK(parse_token("D1081") == std::nullopt);
  CHECK(parse_token("[X:1]") == std::nullopt);
  CHECK(parse_token("D-1") == std::nullopt);
  CHECK(is_att(classify("[LT]")));
  CHECK_FALSE(is_att(classify("i-D2")));
}

TEST_CASE("encoding of a hand-built record") {
  const auto seq = encode_patient(two_visit_record(), CodecConfig{});
  const std::vector<std::string> want = {"[year:2010]", "[age:60]", "[gender:8532]", "[race:8527]", "[VS]",
                                         "[VT:9202]",   "[C:201826]", "[D:1503297]", "[VE]",        "D10",
                                         "[VS]",        "[VT:9201]",  "[C:1000]",    "i-D2",        "[P:2000]",
                                         "i-D1",        "[DIS:8536]", "[VE]",        "[END]"};
  CHECK(seq.tokens == want);
  REQUIRE(seq.att_days.size() == want.size());
  CHECK(seq.att_days[9] == 10);
  CHECK(seq.person_id == "42");

  CodecConfig no_intra;
  no_intra.intra_visit_time = false;
  const auto plain = encode_patient(two_visit_record(), no_intra);
  CHECK(std::count_if(plain.tokens.begin(), plain.tokens.end(),
                      [](const std::string& t) { return t.rfind("i-D", 0) == 0; }) == 0);
}

TEST_CASE("long gaps collapse to [LT] and keep the true interval") {
  auto r = two_visit_record();
  r.visits[1].start = r.visits[0].end + 2000;
  r.visits[1].end = r.visits[1].start + 3;
  r.visits[1].events = {};
  const auto seq = encode_patient(r, CodecConfig{});
  CHECK(seq.tokens[9] == "[LT]");
  CHECK(seq.att_days[9] == 2000);
  const auto back = decode_sequence(seq, CodecConfig{}, {r.visits[0].start, false});
  CHECK(back.visits[1].start - back.visits[0].end == tokens::kLongTermNominalDays);
}

TEST_CASE("round trip on random records with grammar acceptance") {
  Rng rng = make_rng(7);
  CodecConfig cfg;
  for (int i = 0; i < 1000; ++i) {
    const auto r = random_record(rng, {}, std::to_string(i));
    const auto seq = encode_patient(r, cfg);
    const auto g = validate_grammar(seq.tokens, cfg);
    REQUIRE_MESSAGE(g.ok, g.reason);
    const auto back = decode_sequence(seq, cfg, {r.visits.front().start, false});
    REQUIRE(back == r);
    CHECK(same_timeline(decode_sequence(seq, cfg), r));
  }
}

TEST_CASE("round trip without intra-visit time loses only event days") {
  Rng rng = make_rng(8);
  CodecConfig cfg;
  cfg.intra_visit_time = false;
  testing::RandomRecordOptions opts;
  opts.max_gap = 1000;  // stays within the ATT range after stays collapse
  for (int i = 0; i < 200; ++i) {
    auto r = random_record(rng, opts);
    for (auto& v : r.visits) {
      v.end = v.start;
      for (auto& e : v.events) e.date = v.start;
      std::sort(v.events.begin(), v.events.end(), event_less);
    }
    CHECK(decode_sequence(encode_patient(r, cfg), cfg, {r.visits.front().start, false}) == r);
  }
}

TEST_CASE("decoder reports structured errors") {
  CodecConfig cfg;
  auto seq = encode_patient(two_visit_record(), cfg);
  auto reason_of = [&](std::vector<std::string> toks) {
    TokenSequence s{"x", toks, std::vector<int64_t>(toks.size(), -1)};
    try {
      decode_sequence(s, cfg);
    } catch (const DecodeError& e) {
      return e.reason();
    }
    return std::string("ok");
  };
  auto toks = seq.tokens;
  CHECK(reason_of(toks) == "ok");
  CHECK(reason_of({}) == "empty_sequence");
  CHECK(reason_of({"[age:3]"}) == "missing_prefix");
  auto bad = toks;
  bad[6] = "[C:x]";
  CHECK(reason_of(bad) == "unknown_token");
  bad = toks;
  bad.erase(bad.begin() + 16);  // inpatient without discharge
  CHECK(reason_of(bad) == "discharge_mismatch");
  bad = toks;
  bad.insert(bad.begin() + 7, "D3");
  CHECK(reason_of(bad) == "att_inside_visit");
  bad = toks;
  bad.pop_back();
  CHECK(reason_of(bad) == "missing_end");
  bad = toks;
  bad.push_back("[C:5]");
  CHECK(reason_of(bad) == "trailing_tokens");
  bad = toks;
  bad.erase(bad.begin() + 9);  // no time token between visits
  CHECK(reason_of(bad) == "expected_time_or_end");
}

TEST_CASE("truncated sequences decode up to the last complete visit") {
  CodecConfig cfg;
  auto seq = encode_patient(two_visit_record(), cfg);
  seq.tokens.resize(13);  // cut inside the second visit
  seq.att_days.resize(13);
  CHECK_THROWS_AS(decode_sequence(seq, cfg), DecodeError);
  const auto r = decode_sequence(seq, cfg, {std::nullopt, true});
  CHECK(r.visits.size() == 1);
}

TEST_CASE("grammar validator agrees with the decoder on mutated sequences") {
  CodecConfig cfg;
  Rng rng = make_rng(9);
  const std::vector<std::string> alphabet = {"[VS]", "[VE]", "[VT:9201]", "[VT:9202]", "[DIS:8536]", "D5", "[LT]",
                                             "i-D1", "[C:1]", "[END]"};
  for (int i = 0; i < 500; ++i) {
    auto seq = encode_patient(random_record(rng), cfg);
    const size_t pos = 4 + std::uniform_int_distribution<size_t>(0, seq.tokens.size() - 5)(rng);
    seq.tokens[pos] = alphabet[std::uniform_int_distribution<size_t>(0, alphabet.size() - 1)(rng)];
    bool decodes = true;
    try {
      decode_sequence(seq, cfg);
    } catch (const DecodeError&) {
      decodes = false;
    }
    CHECK(validate_grammar(seq.tokens, cfg).ok == decodes);
  }
}

TEST_CASE("record validation") {
  CodecConfig cfg;
  auto r = two_visit_record();
  r.visits[1].discharge_concept_id.reset();
  CHECK_THROWS_AS(encode_patient(r, cfg), ValidationError);
  r = two_visit_record();
  r.visits[0].events[0].date = r.visits[0].start + 5;
  CHECK_THROWS_AS(encode_patient(r, cfg), ValidationError);
  r = two_visit_record();
  r.birth_year = 2011;
  CHECK_THROWS_AS(encode_patient(r, cfg), ValidationError);
  r.visits.clear();
  CHECK_THROWS_AS(encode_patient(r, cfg), ValidationError);
}

TEST_CASE("vocabulary layout and persistence") {
  Rng rng = make_rng(3);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(encode_patient(random_record(rng), CodecConfig{}));
  const auto v = Vocabulary::build(corpus);
  CHECK(v.token(0) == "[PAD]");
  CHECK(v.pad_id() == 0);
  CHECK(v.token(1) == "[VS]");
  CHECK(v.token(2) == "[VE]");
  CHECK(v.token(3) == "[LT]");
  CHECK(v.token(4) == "[END]");
  for (int d = 0; d <= 1080; ++d) CHECK(v.token(5 + d) == "D" + std::to_string(d));
  for (size_t i = 1087; i < v.size(); ++i) CHECK(v.token(static_cast<TokenId>(i - 1)) < v.token(static_cast<TokenId>(i)));
  std::set<std::string> seen;
  for (const auto& s : corpus)
    for (const auto& t : s.tokens) seen.insert(t);
  for (const auto& t : seen) CHECK(v.find(t).has_value());
  CHECK_THROWS_AS(v.id("[C:999999999]"), ValidationError);

  TempDir dir("vocab");
  v.save(dir / "vocab.txt");
  const auto loaded = Vocabulary::load(dir / "vocab.txt");
  CHECK(loaded == v);
  CHECK(loaded.hash() == v.hash());

  const std::vector<std::string> extra = {"[C:999999999]", "[VS]"};
  const auto e = v.expand(extra);
  CHECK(e.added == 1);
  CHECK(e.duplicates == 1);
  for (TokenId i = 0; i < static_cast<TokenId>(v.size()); ++i) CHECK(e.vocabulary.token(i) == v.token(i));
  const std::vector<std::string> junk = {"nonsense"};
  CHECK_THROWS_AS(v.expand(junk), ValidationError);
}

TEST_CASE("event tables round trip through CSV and records") {
  Rng rng = make_rng(11);
  std::vector<PatientRecord> records;
  for (int i = 0; i < 30; ++i) records.push_back(random_record(rng, {}, std::to_string(i + 1)));
  const auto tables = tables_from_records(records);
  TempDir dir("tables");
  tables.save(dir / "p.csv", dir / "v.csv", dir / "e.csv");
  const auto loaded = EventTables::load(dir / "p.csv", dir / "v.csv", dir / "e.csv");
  IngestReport rep;
  const auto back = records_from_tables(loaded, CodecConfig{}, &rep);
  CHECK(back == records);
  CHECK(rep.filled_discharge == 0);
  CHECK(rep.persons_without_visits == 0);
}

TEST_CASE("ingestion repairs and counts discharge inconsistencies") {
  auto tables = tables_from_records({two_visit_record()});
  tables.visits[1].discharge_concept_id.reset();
  tables.visits[0].discharge_concept_id = 8536;
  tables.events.push_back({"42", tables.visits[0].visit_id, Domain::Condition, 0, tables.visits[0].start_date});
  tables.persons.push_back({"43", 1960, 8507, 8527});
  IngestReport rep;
  const auto recs = records_from_tables(tables, CodecConfig{}, &rep);
  REQUIRE(recs.size() == 1);
  CHECK(rep.filled_discharge == 1);
  CHECK(rep.dropped_discharge == 1);
  CHECK(rep.unknown_concept_events == 1);
  CHECK(rep.persons_without_visits == 1);
  CHECK(recs[0].visits[1].discharge_concept_id == 0);
  CHECK_FALSE(recs[0].visits[0].discharge_concept_id.has_value());
}

TEST_CASE("malformed tables name the file") {
  TempDir dir("badtables");
  std::ofstream(dir / "p.csv") << "person_id,birth_year\n1,1950\n";
  std::ofstream(dir / "v.csv") << "visit_id\n";
  std::ofstream(dir / "e.csv") << "person_id\n";
  try {
    EventTables::load(dir / "p.csv", dir / "v.csv", dir / "e.csv");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("p.csv") != std::string::npos);
  }
  CHECK_THROWS_AS(EventTables::load(dir / "missing.csv", dir / "v.csv", dir / "e.csv"), ValidationError);
}

TEST_CASE("sequence files keep extra columns") {
  TempDir dir("seqfile");
  SequenceFileRow row{encode_patient(two_visit_record(), CodecConfig{}), {{"expert", "0"}}};
  write_sequence_file(dir / "s.tsv", {row});
  const auto back = read_sequence_file(dir / "s.tsv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].sequence.tokens == row.sequence.tokens);
  CHECK(back[0].sequence.person_id == "42");
  CHECK(back[0].extra.at("expert") == "0");
}
