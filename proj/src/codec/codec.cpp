#include "codec/codec.hpp"

#include <algorithm>

#include "common/errors.hpp"

namespace ehrgen {

DecodeError::DecodeError(size_t position, std::string reason, const std::string& detail)
    : std::runtime_error("decode error at token " + std::to_string(position) + " (" + reason + "): " + detail),
      position_(position),
      reason_(std::move(reason)) {}

TokenSequence encode_patient(const PatientRecord& input, const CodecConfig& cfg) {
  PatientRecord r = canonicalize(input);
  validate_record(r, cfg);

  TokenSequence seq;
  seq.person_id = r.person_id;
  auto& out = seq.tokens;
  auto& days = seq.att_days;
  auto emit = [&](std::string tok, int64_t att = -1) {
    out.push_back(std::move(tok));
    days.push_back(att);
  };

  const int start_year = r.visits.front().start.year();
  emit(year_token(start_year));
  emit(age_token(start_year - r.birth_year));
  emit(gender_token(r.gender_concept));
  emit(race_token(r.race_concept));

  for (size_t i = 0; i < r.visits.size(); ++i) {
    const Visit& v = r.visits[i];
    if (i > 0) {
      int64_t gap = std::max<int64_t>(0, v.start - r.visits[i - 1].end);
      emit(att_token(gap), gap);
    }
    emit(std::string(tokens::kVisitStart));
    emit(visit_type_token(v.visit_concept_id));
    Day cursor = v.start;
    for (const auto& e : v.events) {
      if (cfg.intra_visit_time && e.date > cursor) {
        emit(intra_att_token(e.date - cursor));
        cursor = e.date;
      }
      emit(concept_token(e.domain, e.concept_id));
    }
    if (cfg.intra_visit_time && v.end > cursor) emit(intra_att_token(v.end - cursor));
    if (v.discharge_concept_id) emit(discharge_token(*v.discharge_concept_id));
    emit(std::string(tokens::kVisitEnd));
  }
  emit(std::string(tokens::kEnd));
  return seq;
}

PatientRecord decode_sequence(const TokenSequence& seq, const CodecConfig& cfg, const DecodeOptions& opts) {
  const auto& toks = seq.tokens;
  if (toks.empty()) throw DecodeError(0, "empty_sequence", "sequence has no tokens");

  std::vector<TokenInfo> info;
  info.reserve(toks.size());
  for (size_t i = 0; i < toks.size(); ++i) {
    auto parsed = parse_token(toks[i]);
    if (!parsed) throw DecodeError(i, "unknown_token", "'" + toks[i] + "'");
    info.push_back(*parsed);
  }

  static constexpr TokenClass kPrefix[4] = {TokenClass::Year, TokenClass::Age, TokenClass::Gender, TokenClass::Race};
  for (size_t i = 0; i < 4; ++i) {
    if (i >= info.size() || info[i].cls != kPrefix[i]) {
      throw DecodeError(i, "missing_prefix", "expected " + std::string(class_name(kPrefix[i])) + " token");
    }
  }

  PatientRecord r;
  r.person_id = seq.person_id;
  const int year = static_cast<int>(info[0].value);
  r.birth_year = year - static_cast<int>(info[1].value);
  r.gender_concept = info[2].value;
  r.race_concept = info[3].value;

  // With truncation allowed, decode only up to the last complete visit when [END] is absent.
  size_t limit = info.size();
  bool has_end = std::any_of(info.begin(), info.end(), [](const TokenInfo& t) { return t.cls == TokenClass::End; });
  if (!has_end) {
    if (!opts.allow_truncated) throw DecodeError(info.size(), "missing_end", "sequence does not end with [END]");
    size_t last_ve = info.size();
    for (size_t i = info.size(); i-- > 4;) {
      if (info[i].cls == TokenClass::VisitEnd) {
        last_ve = i;
        break;
      }
    }
    if (last_ve == info.size()) throw DecodeError(info.size(), "no_visits", "no complete visit before truncation");
    limit = last_ve + 1;
  }

  Day cursor = opts.anchor.value_or(Day::jan1(year));
  enum class State { ExpectVisit, ExpectType, InVisit, AfterDischarge, BetweenVisits, Done };
  State state = State::ExpectVisit;
  Visit current;

  for (size_t i = 4; i < limit; ++i) {
    const TokenInfo& t = info[i];
    switch (state) {
      case State::ExpectVisit:
        if (t.cls != TokenClass::VisitStart) {
          throw DecodeError(i, "expected_visit_start", "expected [VS], got '" + toks[i] + "'");
        }
        current = Visit{};
        current.start = cursor;
        state = State::ExpectType;
        break;
      case State::ExpectType:
        if (t.cls != TokenClass::VisitType) throw DecodeError(i, "expected_visit_type", "expected visit type after [VS]");
        current.visit_concept_id = t.value;
        state = State::InVisit;
        break;
      case State::InVisit:
        if (t.cls == TokenClass::Concept) {
          current.events.push_back(ClinicalEvent{t.value, t.domain, cursor});
        } else if (t.cls == TokenClass::IntraAtt) {
          cursor = cursor + static_cast<int32_t>(t.value);
        } else if (t.cls == TokenClass::Discharge) {
          current.discharge_concept_id = t.value;
          state = State::AfterDischarge;
        } else if (t.cls == TokenClass::VisitEnd) {
          state = State::AfterDischarge;
          --i;  // reprocess [VE] in the closing state
        } else if (is_att(t.cls)) {
          throw DecodeError(i, "att_inside_visit", "inter-visit time token inside a visit");
        } else {
          throw DecodeError(i, "unexpected_token_in_visit", "'" + toks[i] + "' inside a visit");
        }
        break;
      case State::AfterDischarge:
        if (t.cls != TokenClass::VisitEnd) throw DecodeError(i, "expected_visit_end", "expected [VE] after discharge");
        if (cfg.is_inpatient(current.visit_concept_id) != current.discharge_concept_id.has_value()) {
          throw DecodeError(i, "discharge_mismatch",
                            current.discharge_concept_id ? "discharge token in a non-inpatient visit"
                                                         : "inpatient visit without discharge token");
        }
        current.end = cursor;
        std::sort(current.events.begin(), current.events.end(), event_less);
        r.visits.push_back(std::move(current));
        state = State::BetweenVisits;
        break;
      case State::BetweenVisits:
        if (is_att(t.cls)) {
          cursor = cursor + static_cast<int32_t>(t.value);
          state = State::ExpectVisit;
        } else if (t.cls == TokenClass::End) {
          state = State::Done;
        } else if (t.cls == TokenClass::IntraAtt) {
          throw DecodeError(i, "intra_outside_visit", "intra-visit time token between visits");
        } else {
          throw DecodeError(i, "expected_time_or_end", "expected a time token or [END] after [VE]");
        }
        break;
      case State::Done:
        if (t.cls != TokenClass::Pad) throw DecodeError(i, "trailing_tokens", "tokens after [END]");
        break;
    }
  }
  if (has_end && state != State::Done) {
    throw DecodeError(limit, "unterminated_visit", "sequence ended inside a visit or after a time token");
  }
  if (!has_end && state != State::BetweenVisits) {
    throw DecodeError(limit, "unterminated_visit", "truncated sequence did not stop after [VE]");
  }
  if (r.visits.empty()) throw DecodeError(4, "no_visits", "sequence has no visits");
  return r;
}

GrammarResult validate_grammar(std::span<const std::string> toks, const CodecConfig& cfg) {
  auto bad = [](size_t pos, std::string reason) { return GrammarResult{false, pos, std::move(reason)}; };
  std::vector<TokenInfo> info;
  for (size_t i = 0; i < toks.size(); ++i) {
    auto p = parse_token(toks[i]);
    if (!p) return bad(i, "unknown_token");
    info.push_back(*p);
  }
  size_t i = 0;
  for (TokenClass c : {TokenClass::Year, TokenClass::Age, TokenClass::Gender, TokenClass::Race}) {
    if (i >= info.size() || info[i].cls != c) return bad(i, "missing_prefix");
    ++i;
  }
  auto at = [&](size_t k) { return k < info.size() ? info[k].cls : TokenClass::Pad; };
  size_t visits = 0;
  while (true) {
    if (at(i) != TokenClass::VisitStart || i >= info.size()) return bad(i, "expected_visit_start");
    ++i;
    if (at(i) != TokenClass::VisitType || i >= info.size()) return bad(i, "expected_visit_type");
    const bool inpatient = cfg.is_inpatient(info[i].value);
    ++i;
    while (i < info.size() && (at(i) == TokenClass::Concept || at(i) == TokenClass::IntraAtt)) ++i;
    const bool discharge = i < info.size() && at(i) == TokenClass::Discharge;
    if (discharge != inpatient) return bad(i, "discharge_mismatch");
    if (discharge) ++i;
    if (i >= info.size() || at(i) != TokenClass::VisitEnd) return bad(i, "expected_visit_end");
    ++i;
    ++visits;
    if (i < info.size() && is_att(at(i))) {
      ++i;
      continue;
    }
    break;
  }
  if (i >= info.size() || at(i) != TokenClass::End) return bad(i, "expected_end");
  ++i;
  for (; i < info.size(); ++i)
    if (at(i) != TokenClass::Pad) return bad(i, "trailing_tokens");
  return {};
}

bool same_timeline(const PatientRecord& a, const PatientRecord& b) {
  if (a.birth_year != b.birth_year || a.gender_concept != b.gender_concept || a.race_concept != b.race_concept)
    return false;
  if (a.visits.size() != b.visits.size()) return false;
  if (a.visits.empty()) return true;
  const Day a0 = a.visits.front().start, b0 = b.visits.front().start;
  for (size_t i = 0; i < a.visits.size(); ++i) {
    const Visit &va = a.visits[i], &vb = b.visits[i];
    if (va.visit_concept_id != vb.visit_concept_id || va.discharge_concept_id != vb.discharge_concept_id) return false;
    if (va.start - a0 != vb.start - b0 || va.end - a0 != vb.end - b0) return false;
    if (va.events.size() != vb.events.size()) return false;
    for (size_t j = 0; j < va.events.size(); ++j) {
      const auto &ea = va.events[j], &eb = vb.events[j];
      if (ea.concept_id != eb.concept_id || ea.domain != eb.domain || ea.date - a0 != eb.date - b0) return false;
    }
  }
  return true;
}

std::vector<std::string> demographic_prefix(const TokenSequence& seq) {
  if (seq.tokens.size() < 4) throw ValidationError("sequence shorter than the demographic prefix");
  return {seq.tokens.begin(), seq.tokens.begin() + 4};
}

}  // namespace ehrgen
