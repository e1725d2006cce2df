#include "covaud/matching.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <tuple>

#include "covaud/csv.hpp"
#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud {

using nlohmann::json;

std::string_view to_string(Strategy s) { return s == Strategy::Ymd ? "YMD" : "YM"; }

std::optional<Strategy> parse_strategy(std::string_view s) {
  const auto v = text::to_lower(text::trim(s));
  if (v == "ymd") return Strategy::Ymd;
  if (v == "ym") return Strategy::Ym;
  return std::nullopt;
}

namespace {

auto sort_key(const MatchResult& m) {
  return std::make_tuple(std::cref(m.article_id), m.sentence_index, std::cref(m.event_id), m.strategy,
                         m.matched_date.iso(), std::cref(m.matched_date.raw_span),
                         std::cref(m.matched_country.iso3));
}

}  // namespace

bool operator==(const MatchResult& a, const MatchResult& b) { return sort_key(a) == sort_key(b); }
bool operator<(const MatchResult& a, const MatchResult& b) { return sort_key(a) < sort_key(b); }

json to_json(const MatchResult& m) {
  return json{{"event_id", m.event_id},
              {"article_id", m.article_id},
              {"sentence_index", m.sentence_index},
              {"strategy", to_string(m.strategy)},
              {"matched_date", to_json(m.matched_date)},
              {"iso3", m.matched_country.iso3}};
}

MatchResult match_from_json(const json& j, const CountryRegistry& registry) {
  try {
    MatchResult m;
    m.event_id = j.at("event_id").get<std::string>();
    m.article_id = j.at("article_id").get<std::string>();
    m.sentence_index = j.at("sentence_index").get<std::size_t>();
    const auto strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (!strategy) throw ParseError("unknown strategy in match record");
    m.strategy = *strategy;
    m.matched_date = date_mention_from_json(j.at("matched_date"));
    const auto iso3 = j.at("iso3").get<std::string>();
    const auto* country = registry.by_iso3(iso3);
    if (country == nullptr) throw ParseError("unknown iso3 in match record: " + iso3);
    m.matched_country = *country;
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed match record: ") + e.what());
  }
}

void write_matches_jsonl(std::ostream& out, std::span<const MatchResult> matches) {
  for (const auto& m : matches) out << to_json(m).dump() << '\n';
}

std::vector<MatchResult> read_matches_jsonl(std::istream& in, const CountryRegistry& registry) {
  std::vector<MatchResult> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(match_from_json(json::parse(line), registry));
    } catch (const json::exception& e) {
      throw ParseError("matches line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("matches line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

EventIndex::EventIndex(std::vector<ConsolidatedEvent> events) : events_(std::move(events)) {
  std::stable_sort(events_.begin(), events_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.country.iso3, a.start_date, a.event_id) < std::tie(b.country.iso3, b.start_date, b.event_id);
  });
  for (std::size_t i = 0; i < events_.size();) {
    std::size_t j = i;
    while (j < events_.size() && events_[j].country.iso3 == events_[i].country.iso3) ++j;
    ranges_.emplace(events_[i].country.iso3, std::make_pair(i, j));
    i = j;
  }
}

std::span<const ConsolidatedEvent> EventIndex::for_country(std::string_view iso3) const {
  const auto it = ranges_.find(iso3);
  if (it == ranges_.end()) return {};
  return std::span<const ConsolidatedEvent>(events_).subspan(it->second.first, it->second.second - it->second.first);
}

std::optional<std::pair<Date, Date>> date_interval(const DateMention& d) {
  if (!d.resolved() || *d.month < 1 || *d.month > 12) return std::nullopt;
  if (d.day) {
    if (*d.day < 1 || *d.day > days_in_month(*d.year, *d.month)) return std::nullopt;
    const Date day(*d.year, *d.month, *d.day);
    return std::make_pair(day, day);
  }
  return std::make_pair(month_first_day(*d.year, *d.month), month_last_day(*d.year, *d.month));
}

namespace {

MatchResult make_match(const ResolvedCandidate& c, const ConsolidatedEvent& e, Strategy strategy) {
  return MatchResult{e.event_id, c.candidate.article_id, c.candidate.sentence_index, strategy, c.date, c.country};
}

}  // namespace

std::vector<MatchResult> match_ymd(const ResolvedCandidate& candidate, const EventIndex& events, int window_days) {
  std::vector<MatchResult> out;
  const auto span = date_interval(candidate.date);
  if (!span) return out;
  for (const auto& e : events.for_country(candidate.country.iso3)) {
    if (ranges_intersect(span->first, span->second, e.start_date, e.end_date.plus_days(window_days))) {
      out.push_back(make_match(candidate, e, Strategy::Ymd));
    }
  }
  return out;
}

std::vector<MatchResult> match_ym(const ResolvedCandidate& candidate, const EventIndex& events) {
  std::vector<MatchResult> out;
  if (!candidate.date.resolved() || *candidate.date.month < 1 || *candidate.date.month > 12) return out;
  const auto first = month_first_day(*candidate.date.year, *candidate.date.month);
  const auto last = month_last_day(*candidate.date.year, *candidate.date.month);
  for (const auto& e : events.for_country(candidate.country.iso3)) {
    if (ranges_intersect(first, last, e.start_date, e.end_date)) out.push_back(make_match(candidate, e, Strategy::Ym));
  }
  return out;
}

std::vector<MatchResult> match_all(std::span<const ResolvedCandidate> candidates, const EventIndex& events,
                                   Strategy strategy, int window_days, unsigned jobs) {
  auto run = [&](std::size_t begin, std::size_t end) {
    std::vector<MatchResult> out;
    for (std::size_t i = begin; i < end; ++i) {
      auto found = strategy == Strategy::Ymd ? match_ymd(candidates[i], events, window_days)
                                             : match_ym(candidates[i], events);
      out.insert(out.end(), std::make_move_iterator(found.begin()), std::make_move_iterator(found.end()));
    }
    return out;
  };

  std::vector<MatchResult> all;
  jobs = std::max(1U, jobs);
  if (jobs == 1 || candidates.size() < 2 * jobs) {
    all = run(0, candidates.size());
  } else {
    const std::size_t chunk = (candidates.size() + jobs - 1) / jobs;
    std::vector<std::future<std::vector<MatchResult>>> parts;
    for (std::size_t b = 0; b < candidates.size(); b += chunk) {
      parts.push_back(std::async(std::launch::async, run, b, std::min(candidates.size(), b + chunk)));
    }
    for (auto& p : parts) {
      auto part = p.get();
      all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

// ---------------------------------------------------------------------------

Labels read_labels(std::istream& in, const std::string& label) {
  csv::Reader reader(in);
  const auto header_row = reader.next();
  if (!header_row) throw ParseError(label + ": empty labels file");
  const csv::Header header(*header_row);
  header.require({"article_id", "sentence_index", "relevant"});

  Labels labels;
  while (const auto row = reader.next()) {
    const auto where = label + ":" + std::to_string(reader.line());
    const auto article = header.get(*row, "article_id");
    const auto index_raw = header.get(*row, "sentence_index");
    const auto relevant_raw = header.get(*row, "relevant");
    if (article.empty()) throw ParseError(where + ": empty article_id");
    std::size_t index = 0;
    try {
      std::size_t used = 0;
      const auto v = std::stoll(index_raw, &used);
      if (used != index_raw.size() || v < 0) throw std::invalid_argument("range");
      index = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ParseError(where + ": bad sentence_index '" + index_raw + "'");
    }
    bool relevant = false;
    if (relevant_raw == "1") {
      relevant = true;
    } else if (relevant_raw != "0") {
      throw ParseError(where + ": relevant must be 0 or 1, got '" + relevant_raw + "'");
    }
    const auto [it, inserted] = labels.emplace(LabelKey{article, index}, relevant);
    if (!inserted && it->second != relevant) throw ParseError(where + ": conflicting label for " + article);
  }
  return labels;
}

std::optional<double> percentage(std::size_t numerator, std::size_t denominator) {
  if (denominator == 0) return std::nullopt;
  return 100.0 * static_cast<double>(numerator) / static_cast<double>(denominator);
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // nudge so that values printed as ...5 in decimal round up despite binary error
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

std::optional<double> hit_rate(std::span<const ConsolidatedEvent> events, std::span<const MatchResult> matches) {
  std::set<std::string_view> matched;
  for (const auto& m : matches) matched.insert(m.event_id);
  std::size_t hits = 0;
  for (const auto& e : events) hits += matched.count(e.event_id);
  return percentage(hits, events.size());
}

EvalReport evaluate(std::span<const MatchResult> matches, const Labels& labels,
                    std::span<const ConsolidatedEvent> events) {
  EvalReport r;
  r.ground_truth_total = events.size();

  std::set<LabelKey> sentences;
  std::set<std::string_view> matched_events;
  for (const auto& m : matches) {
    sentences.emplace(m.article_id, m.sentence_index);
    matched_events.insert(m.event_id);
  }
  for (const auto& e : events) r.hits += matched_events.count(e.event_id);
  r.recall = r.ground_truth_total == 0 ? 0.0
                                       : static_cast<double>(r.hits) / static_cast<double>(r.ground_truth_total);

  for (const auto& key : sentences) {
    const auto it = labels.find(key);
    if (it == labels.end()) {
      ++r.unlabeled;
      continue;
    }
    ++r.matched_candidates;
    if (it->second) ++r.relevant_matched;
  }
  if (r.matched_candidates > 0) {
    r.precision = static_cast<double>(r.relevant_matched) / static_cast<double>(r.matched_candidates);
  }
  return r;
}

json to_json(const EvalReport& r) {
  const auto pct = [](std::optional<double> v) { return v ? json(round_half_up(*v * 100.0)) : json(nullptr); };
  return json{{"precision", r.precision ? json(*r.precision) : json(nullptr)},
              {"precision_pct", pct(r.precision)},
              {"recall", r.recall},
              {"recall_pct", pct(r.recall)},
              {"hits", r.hits},
              {"matched_candidates", r.matched_candidates},
              {"relevant_matched", r.relevant_matched},
              {"ground_truth_total", r.ground_truth_total},
              {"unlabeled", r.unlabeled}};
}

}  // namespace covaud
