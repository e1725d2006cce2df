#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "covaud/date.hpp"

namespace covaud {

enum class YearSource { Explicit, Sentence, Paragraph, Title, Unresolved };

std::string_view to_string(YearSource s);
std::optional<YearSource> parse_year_source(std::string_view s);

/// A (possibly partial) date found in text.
struct DateMention {
  std::string raw_span;
  std::optional<unsigned> day;
  std::optional<unsigned> month;
  std::optional<int> year;
  YearSource year_source = YearSource::Unresolved;

  /// Month and year known; the day may still be absent.
  [[nodiscard]] bool resolved() const { return month.has_value() && year.has_value(); }
  /// "2019-04-13", "2018-08" or "2018" depending on precision.
  [[nodiscard]] std::string iso() const;

  friend bool operator==(const DateMention&, const DateMention&) = default;
};

nlohmann::json to_json(const DateMention& d);
DateMention date_mention_from_json(const nlohmann::json& j);

/// Day used for "early", "mid" and "late" month modifiers.
inline constexpr unsigned kEarlyDay = 5;
inline constexpr unsigned kMidDay = 15;
inline constexpr unsigned kLateDay = 25;

inline constexpr int kMinYear = 1900;
inline constexpr int kMaxYear = 2100;

/// Recognizes "Month DD, YYYY", "DD Month YYYY", "Month YYYY", "Month DD",
/// "DD Month", bare "Month", "early/mid/late Month [YYYY]", ISO
/// "YYYY-MM-DD" and bare years 1900-2100. Month names must be capitalized.
/// Mentions are non-overlapping and in text order.
std::vector<DateMention> find_dates(std::string_view text);

/// Distinct four-digit year tokens (1900-2100) in order of first appearance.
std::vector<int> year_tokens(std::string_view text);

/// Fills a missing year from context: a single year in the sentence, else
/// (only when the sentence has none) a single year in the paragraph, else a
/// single year in the title. Mentions that already carry a year are returned
/// unchanged.
DateMention infer_year(DateMention mention, std::string_view sentence, std::string_view paragraph,
                       std::string_view title);

}  // namespace covaud
