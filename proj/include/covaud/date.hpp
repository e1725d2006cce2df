#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace covaud {

/// A proleptic Gregorian calendar day.
class Date {
 public:
  Date() = default;
  /// Throws std::invalid_argument when (year, month, day) is not a real day.
  Date(int year, unsigned month, unsigned day);
  explicit Date(std::chrono::sys_days days) : days_(days) {}

  /// Strict YYYY-MM-DD.
  static std::optional<Date> parse_iso(std::string_view text);

  [[nodiscard]] int year() const;
  [[nodiscard]] unsigned month() const;
  [[nodiscard]] unsigned day() const;
  [[nodiscard]] std::chrono::sys_days sys_days() const { return days_; }

  [[nodiscard]] Date plus_days(int n) const { return Date(days_ + std::chrono::days{n}); }
  [[nodiscard]] std::string iso() const;

  friend auto operator<=>(const Date&, const Date&) = default;
  friend bool operator==(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

unsigned days_in_month(int year, unsigned month);

/// First and last day of a calendar month.
Date month_first_day(int year, unsigned month);
Date month_last_day(int year, unsigned month);

/// Inclusive interval intersection test.
inline bool ranges_intersect(Date a_begin, Date a_end, Date b_begin, Date b_end) {
  return a_begin <= b_end && b_begin <= a_end;
}

}  // namespace covaud
