#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "covaud/country.hpp"
#include "covaud/date.hpp"
#include "covaud/dates.hpp"
#include "covaud/ground_truth.hpp"
#include "covaud/places.hpp"

namespace covaud {

enum class Strategy { Ymd, Ym };

std::string_view to_string(Strategy s);
/// Accepts "ymd" / "ym" in any case.
std::optional<Strategy> parse_strategy(std::string_view s);

inline constexpr int kDefaultWindowDays = 5;

struct MatchResult {
  std::string event_id;
  std::string article_id;
  std::size_t sentence_index = 0;
  Strategy strategy = Strategy::Ymd;
  DateMention matched_date;
  CountryCode matched_country;
};

bool operator==(const MatchResult& a, const MatchResult& b);
bool operator<(const MatchResult& a, const MatchResult& b);

nlohmann::json to_json(const MatchResult& m);
MatchResult match_from_json(const nlohmann::json& j, const CountryRegistry& registry);

void write_matches_jsonl(std::ostream& out, std::span<const MatchResult> matches);
std::vector<MatchResult> read_matches_jsonl(std::istream& in, const CountryRegistry& registry);

/// Events grouped by country for lookup. Immutable once built.
class EventIndex {
 public:
  EventIndex() = default;
  explicit EventIndex(std::vector<ConsolidatedEvent> events);

  [[nodiscard]] std::span<const ConsolidatedEvent> for_country(std::string_view iso3) const;
  [[nodiscard]] std::span<const ConsolidatedEvent> events() const { return events_; }
  [[nodiscard]] std::size_t size() const { return events_.size(); }

 private:
  std::vector<ConsolidatedEvent> events_;
  std::map<std::string, std::pair<std::size_t, std::size_t>, std::less<>> ranges_;
};

/// Calendar span a date mention denotes: one day, or the whole month when
/// the day is absent. Nullopt when year or month is missing or the day does
/// not exist.
std::optional<std::pair<Date, Date>> date_interval(const DateMention& d);

/// Same country and the candidate date inside [start, end + window_days].
std::vector<MatchResult> match_ymd(const ResolvedCandidate& candidate, const EventIndex& events,
                                   int window_days = kDefaultWindowDays);
/// Same country and the candidate's month overlapping [start, end].
std::vector<MatchResult> match_ym(const ResolvedCandidate& candidate, const EventIndex& events);

/// Matches every candidate; sorted and free of duplicates.
std::vector<MatchResult> match_all(std::span<const ResolvedCandidate> candidates, const EventIndex& events,
                                   Strategy strategy, int window_days = kDefaultWindowDays, unsigned jobs = 1);

/// (article_id, sentence_index) -> relevant.
using LabelKey = std::pair<std::string, std::size_t>;
using Labels = std::map<LabelKey, bool>;

/// CSV with columns article_id, sentence_index, relevant (0/1).
Labels read_labels(std::istream& in, const std::string& label = "labels");

struct EvalReport {
  std::optional<double> precision;
  double recall = 0.0;
  std::size_t hits = 0;
  /// Distinct matched sentences that carry a label.
  std::size_t matched_candidates = 0;
  std::size_t relevant_matched = 0;
  std::size_t ground_truth_total = 0;
  /// Matched sentences missing from the labels file.
  std::size_t unlabeled = 0;
};

nlohmann::json to_json(const EvalReport& r);

EvalReport evaluate(std::span<const MatchResult> matches, const Labels& labels,
                    std::span<const ConsolidatedEvent> events);

/// 100 * numerator / denominator; nullopt for a zero denominator.
std::optional<double> percentage(std::size_t numerator, std::size_t denominator);
double round_half_up(double value, int decimals = 2);

/// Percentage of events with at least one match; nullopt when there are no
/// events.
std::optional<double> hit_rate(std::span<const ConsolidatedEvent> events, std::span<const MatchResult> matches);

}  // namespace covaud
