#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ehrgen {

enum class Domain : uint8_t { Condition = 0, Drug = 1, Procedure = 2 };

// Rank used for tie-breaking events on the same date: condition < drug < procedure.
constexpr int domain_rank(Domain d) { return static_cast<int>(d); }
std::string_view domain_name(Domain d);
Domain parse_domain(std::string_view name);

enum class TokenClass : uint8_t {
  Year,
  Age,
  Gender,
  Race,
  VisitStart,
  VisitEnd,
  VisitType,
  Discharge,
  AttDay,
  AttLongTerm,
  IntraAtt,
  Concept,
  End,
  Pad,
};

std::string_view class_name(TokenClass c);
TokenClass parse_class_name(std::string_view name);

constexpr bool is_att(TokenClass c) { return c == TokenClass::AttDay || c == TokenClass::AttLongTerm; }

namespace tokens {
inline constexpr std::string_view kVisitStart = "[VS]";
inline constexpr std::string_view kVisitEnd = "[VE]";
inline constexpr std::string_view kLongTerm = "[LT]";
inline constexpr std::string_view kEnd = "[END]";
inline constexpr std::string_view kPad = "[PAD]";

// Largest day count with its own ATT token; longer gaps collapse to [LT].
inline constexpr int64_t kMaxAttDays = 1080;
// Interval assigned to [LT] when no true value is attached (decoding, time accrual).
inline constexpr int64_t kLongTermNominalDays = kMaxAttDays + 1;
}  // namespace tokens

// Parsed surface form. `value` holds the integer payload (year, age, concept id, days).
struct TokenInfo {
  TokenClass cls;
  int64_t value = 0;
  Domain domain = Domain::Condition;  // only meaningful for Concept
};

// Classifies a surface form; nullopt when the text is not a token of the grammar.
std::optional<TokenInfo> parse_token(std::string_view text);
TokenClass classify(std::string_view text);  // throws ValidationError on unknown text

std::string att_token(int64_t interval_days);  // throws ValidationError when negative
std::string intra_att_token(int64_t interval_days);
std::string year_token(int year);
std::string age_token(int age);
std::string gender_token(int64_t concept_id);
std::string race_token(int64_t concept_id);
std::string visit_type_token(int64_t concept_id);
std::string discharge_token(int64_t concept_id);
std::string concept_token(Domain domain, int64_t concept_id);

struct TimeTriple {
  int64_t years = 0;
  int64_t months = 0;
  int64_t days = 0;

  int64_t recompose() const { return 365 * years + 30 * months + days; }
  bool operator==(const TimeTriple&) const = default;
};

// 365-day years, then 30-day months, then remaining days.
TimeTriple decompose_interval(int64_t interval_days);

}  // namespace ehrgen
