#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace ehrgen {

// Calendar day stored as days since 1970-01-01.
class Day {
 public:
  constexpr Day() = default;
  constexpr explicit Day(int32_t days_since_epoch) : value_(days_since_epoch) {}

  static Day from_ymd(int year, unsigned month, unsigned day);
  static Day jan1(int year) { return from_ymd(year, 1, 1); }
  // Strict YYYY-MM-DD; throws ValidationError.
  static Day parse(std::string_view iso);

  constexpr int32_t value() const { return value_; }
  int year() const;
  std::string iso() const;

  constexpr Day operator+(int32_t days) const { return Day(value_ + days); }
  constexpr int32_t operator-(Day other) const { return value_ - other.value_; }
  constexpr auto operator<=>(const Day&) const = default;

 private:
  int32_t value_ = 0;
};

}  // namespace ehrgen
