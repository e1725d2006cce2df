#include "covaud/date.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace covaud {

namespace chr = std::chrono;

Date::Date(int year, unsigned month, unsigned day) {
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok()) {
    throw std::invalid_argument("invalid calendar date " + std::to_string(year) + "-" +
                                std::to_string(month) + "-" + std::to_string(day));
  }
  days_ = chr::sys_days{ymd};
}

std::optional<Date> Date::parse_iso(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    return std::nullopt;
  }
  auto number = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int value = 0;
    const char* first = text.data() + pos;
    const char* last = first + len;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
      return std::nullopt;
    }
    return value;
  };
  const auto y = number(0, 4);
  const auto m = number(5, 2);
  const auto d = number(8, 2);
  if (!y || !m || !d || *m < 1 || *d < 1) {
    return std::nullopt;
  }
  const chr::year_month_day ymd{chr::year{*y}, chr::month{static_cast<unsigned>(*m)},
                                chr::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) {
    return std::nullopt;
  }
  return Date(chr::sys_days{ymd});
}

int Date::year() const { return static_cast<int>(chr::year_month_day{days_}.year()); }
unsigned Date::month() const { return static_cast<unsigned>(chr::year_month_day{days_}.month()); }
unsigned Date::day() const { return static_cast<unsigned>(chr::year_month_day{days_}.day()); }

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
  return buf;
}

unsigned days_in_month(int year, unsigned month) {
  const chr::year_month_day_last last{chr::year{year} / chr::month{month} / chr::last};
  return static_cast<unsigned>(last.day());
}

Date month_first_day(int year, unsigned month) { return Date(year, month, 1); }

Date month_last_day(int year, unsigned month) { return Date(year, month, days_in_month(year, month)); }

}  // namespace covaud
