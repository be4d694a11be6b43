#include "codec/tokens.hpp"

#include <array>
#include <charconv>

#include "common/errors.hpp"

namespace ehrgen {

namespace {

constexpr std::array<std::string_view, 14> kClassNames = {
    "YEAR", "AGE", "GENDER", "RACE", "VS", "VE", "VT", "DISCHARGE", "ATT_DAY", "ATT_LT", "ATT_INTRA", "CONCEPT", "END", "PAD"};

std::optional<int64_t> parse_int_exact(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  // Canonical decimal only: no leading zeros, no '+'.
  if (s.size() > 1 && (s[0] == '0' || (s[0] == '-' && s[1] == '0'))) return std::nullopt;
  return v;
}

// "[key:value]" -> value text, when the key matches.
std::optional<std::string_view> bracket_payload(std::string_view text, std::string_view key) {
  if (text.size() < key.size() + 3 || text.front() != '[' || text.back() != ']') return std::nullopt;
  if (text.substr(1, key.size()) != key || text[key.size() + 1] != ':') return std::nullopt;
  return text.substr(key.size() + 2, text.size() - key.size() - 3);
}

}  // namespace

std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::Condition: return "condition";
    case Domain::Drug: return "drug";
    case Domain::Procedure: return "procedure";
  }
  return "?";
}

Domain parse_domain(std::string_view name) {
  if (name == "condition") return Domain::Condition;
  if (name == "drug") return Domain::Drug;
  if (name == "procedure") return Domain::Procedure;
  throw ValidationError("unknown domain '" + std::string(name) + "' (expected condition, drug or procedure)");
}

std::string_view class_name(TokenClass c) { return kClassNames[static_cast<size_t>(c)]; }

TokenClass parse_class_name(std::string_view name) {
  for (size_t i = 0; i < kClassNames.size(); ++i)
    if (kClassNames[i] == name) return static_cast<TokenClass>(i);
  throw ValidationError("unknown token class '" + std::string(name) + "'");
}

std::optional<TokenInfo> parse_token(std::string_view text) {
  if (text == tokens::kVisitStart) return TokenInfo{TokenClass::VisitStart};
  if (text == tokens::kVisitEnd) return TokenInfo{TokenClass::VisitEnd};
  if (text == tokens::kLongTerm) return TokenInfo{TokenClass::AttLongTerm, tokens::kLongTermNominalDays};
  if (text == tokens::kEnd) return TokenInfo{TokenClass::End};
  if (text == tokens::kPad) return TokenInfo{TokenClass::Pad};

  if (text.size() >= 2 && text[0] == 'D') {
    auto n = parse_int_exact(text.substr(1));
    if (n && *n >= 0 && *n <= tokens::kMaxAttDays) return TokenInfo{TokenClass::AttDay, *n};
    return std::nullopt;
  }
  if (text.starts_with("i-D")) {
    auto n = parse_int_exact(text.substr(3));
    if (n && *n >= 1) return TokenInfo{TokenClass::IntraAtt, *n};
    return std::nullopt;
  }

  struct Keyed {
    std::string_view key;
    TokenClass cls;
    Domain domain;
  };
  static constexpr std::array<Keyed, 9> kKeyed = {{
      {"year", TokenClass::Year, Domain::Condition},
      {"age", TokenClass::Age, Domain::Condition},
      {"gender", TokenClass::Gender, Domain::Condition},
      {"race", TokenClass::Race, Domain::Condition},
      {"VT", TokenClass::VisitType, Domain::Condition},
      {"DIS", TokenClass::Discharge, Domain::Condition},
      {"C", TokenClass::Concept, Domain::Condition},
      {"D", TokenClass::Concept, Domain::Drug},
      {"P", TokenClass::Concept, Domain::Procedure},
  }};
  for (const auto& k : kKeyed) {
    if (auto payload = bracket_payload(text, k.key)) {
      auto n = parse_int_exact(*payload);
      if (!n) return std::nullopt;
      if (k.cls == TokenClass::Concept && *n == 0) return std::nullopt;
      return TokenInfo{k.cls, *n, k.domain};
    }
  }
  return std::nullopt;
}

TokenClass classify(std::string_view text) {
  if (auto info = parse_token(text)) return info->cls;
  throw ValidationError("unrecognized token '" + std::string(text) + "'");
}

std::string att_token(int64_t interval_days) {
  if (interval_days < 0) {
    throw ValidationError("negative inter-visit interval (" + std::to_string(interval_days) +
                          " days): visits are out of order");
  }
  if (interval_days > tokens::kMaxAttDays) return std::string(tokens::kLongTerm);
  return "D" + std::to_string(interval_days);
}

std::string intra_att_token(int64_t interval_days) {
  if (interval_days < 1) throw ValidationError("intra-visit interval must be at least one day");
  return "i-D" + std::to_string(interval_days);
}

std::string year_token(int year) { return "[year:" + std::to_string(year) + "]"; }
std::string age_token(int age) { return "[age:" + std::to_string(age) + "]"; }
std::string gender_token(int64_t c) { return "[gender:" + std::to_string(c) + "]"; }
std::string race_token(int64_t c) { return "[race:" + std::to_string(c) + "]"; }
std::string visit_type_token(int64_t c) { return "[VT:" + std::to_string(c) + "]"; }
std::string discharge_token(int64_t c) { return "[DIS:" + std::to_string(c) + "]"; }

std::string concept_token(Domain domain, int64_t concept_id) {
  if (concept_id == 0) throw ValidationError("concept_id 0 (unknown concept) cannot be encoded");
  static constexpr std::array<char, 3> kPrefix = {'C', 'D', 'P'};
  return std::string("[") + kPrefix[static_cast<size_t>(domain)] + ":" + std::to_string(concept_id) + "]";
}

TimeTriple decompose_interval(int64_t d) {
  if (d < 0) d = 0;
  return TimeTriple{d / 365, (d % 365) / 30, (d % 365) % 30};
}

}  // namespace ehrgen
