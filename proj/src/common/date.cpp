#include "common/date.hpp"

#include <charconv>
#include <cstdio>

#include "common/errors.hpp"

namespace ehrgen {

namespace {
using std::chrono::sys_days;
using std::chrono::year_month_day;
}  // namespace

Day Day::from_ymd(int year, unsigned month, unsigned day) {
  year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) {
    throw ValidationError("invalid calendar date " + std::to_string(year) + "-" + std::to_string(month) +
                          "-" + std::to_string(day));
  }
  return Day(static_cast<int32_t>(sys_days{ymd}.time_since_epoch().count()));
}

Day Day::parse(std::string_view iso) {
  auto fail = [&] { return ValidationError("expected YYYY-MM-DD date, got '" + std::string(iso) + "'"); };
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw fail();
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse_part = [&](std::string_view part, auto& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc() || ptr != part.data() + part.size()) throw fail();
  };
  parse_part(iso.substr(0, 4), y);
  parse_part(iso.substr(5, 2), m);
  parse_part(iso.substr(8, 2), d);
  return from_ymd(y, m, d);
}

int Day::year() const {
  year_month_day ymd{sys_days{std::chrono::days{value_}}};
  return static_cast<int>(ymd.year());
}

std::string Day::iso() const {
  year_month_day ymd{sys_days{std::chrono::days{value_}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace ehrgen
