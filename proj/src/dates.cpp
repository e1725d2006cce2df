#include "covaud/dates.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>

#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud {

using nlohmann::json;

namespace {

struct MonthName {
  std::string_view name;
  unsigned month;
};

constexpr MonthName kMonths[] = {
    {"January", 1},  {"February", 2}, {"March", 3},     {"April", 4},    {"May", 5},
    {"June", 6},     {"July", 7},     {"August", 8},    {"September", 9}, {"October", 10},
    {"November", 11}, {"December", 12}, {"Jan", 1},      {"Feb", 2},      {"Mar", 3},
    {"Apr", 4},      {"Jun", 6},      {"Jul", 7},       {"Aug", 8},      {"Sep", 9},
    {"Sept", 9},     {"Oct", 10},     {"Nov", 11},      {"Dec", 12},
};

std::optional<unsigned> month_of(std::string_view word) {
  if (word.empty() || !text::is_ascii_upper(word.front())) return std::nullopt;
  for (const auto& m : kMonths) {
    if (text::iequals(word, m.name)) return m.month;
  }
  return std::nullopt;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return text::is_ascii_digit(c); });
}

std::optional<int> year_of(std::string_view tok) {
  if (tok.size() != 4 || !all_digits(tok)) return std::nullopt;
  const auto v = parse_int(tok);
  if (!v || *v < kMinYear || *v > kMaxYear) return std::nullopt;
  return v;
}

// "13", "13th", "1st"
std::optional<unsigned> day_of(std::string_view tok) {
  std::size_t digits = 0;
  while (digits < tok.size() && text::is_ascii_digit(tok[digits])) ++digits;
  if (digits == 0 || digits > 2) return std::nullopt;
  const auto suffix = text::to_lower(tok.substr(digits));
  if (!suffix.empty() && suffix != "st" && suffix != "nd" && suffix != "rd" && suffix != "th") return std::nullopt;
  const auto v = parse_int(tok.substr(0, digits));
  if (!v || *v < 1 || *v > 31) return std::nullopt;
  return static_cast<unsigned>(*v);
}

std::optional<unsigned> modifier_day(std::string_view word) {
  const auto w = text::to_lower(word);
  if (w == "early") return kEarlyDay;
  if (w == "mid" || w == "middle") return kMidDay;
  if (w == "late") return kLateDay;
  return std::nullopt;
}

bool day_fits(unsigned day, unsigned month, std::optional<int> year) {
  const int y = year.value_or(2000);  // leap year, so 29 February is allowed without a year
  return day <= days_in_month(y, month);
}

}  // namespace

std::string_view to_string(YearSource s) {
  switch (s) {
    case YearSource::Explicit: return "EXPLICIT";
    case YearSource::Sentence: return "SENTENCE";
    case YearSource::Paragraph: return "PARAGRAPH";
    case YearSource::Title: return "TITLE";
    case YearSource::Unresolved: return "UNRESOLVED";
  }
  return "UNRESOLVED";
}

std::optional<YearSource> parse_year_source(std::string_view s) {
  for (auto v : {YearSource::Explicit, YearSource::Sentence, YearSource::Paragraph, YearSource::Title,
                 YearSource::Unresolved}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::string DateMention::iso() const {
  char buf[32];
  if (year && month && day) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", *year, *month, *day);
  } else if (year && month) {
    std::snprintf(buf, sizeof buf, "%04d-%02u", *year, *month);
  } else if (year) {
    std::snprintf(buf, sizeof buf, "%04d", *year);
  } else if (month && day) {
    std::snprintf(buf, sizeof buf, "--%02u-%02u", *month, *day);
  } else if (month) {
    std::snprintf(buf, sizeof buf, "--%02u", *month);
  } else {
    return {};
  }
  return buf;
}

json to_json(const DateMention& d) {
  return json{{"raw_span", d.raw_span},
              {"day", d.day ? json(*d.day) : json(nullptr)},
              {"month", d.month ? json(*d.month) : json(nullptr)},
              {"year", d.year ? json(*d.year) : json(nullptr)},
              {"year_source", to_string(d.year_source)}};
}

DateMention date_mention_from_json(const json& j) {
  try {
    DateMention d;
    d.raw_span = j.at("raw_span").get<std::string>();
    if (!j.at("day").is_null()) d.day = j["day"].get<unsigned>();
    if (!j.at("month").is_null()) d.month = j["month"].get<unsigned>();
    if (!j.at("year").is_null()) d.year = j["year"].get<int>();
    const auto src = parse_year_source(j.at("year_source").get<std::string>());
    if (!src) throw ParseError("unknown year_source");
    d.year_source = *src;
    return d;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed date mention: ") + e.what());
  }
}

std::vector<int> year_tokens(std::string_view s) {
  std::vector<int> years;
  for (const auto& tok : text::word_tokens(s)) {
    if (const auto y = year_of(tok.text); y && std::find(years.begin(), years.end(), *y) == years.end()) {
      years.push_back(*y);
    }
  }
  return years;
}

std::vector<DateMention> find_dates(std::string_view s) {
  const auto toks = text::word_tokens(s);
  std::vector<DateMention> out;

  // separators allowed inside one date expression
  auto gap_ok = [&](std::size_t a, std::size_t b, bool allow_comma) {
    for (std::size_t k = toks[a].end; k < toks[b].begin; ++k) {
      const char c = s[k];
      if (c == ' ' || c == '\t') continue;
      if (allow_comma && c == ',') continue;
      return false;
    }
    return toks[b].begin > toks[a].end;
  };
  auto emit = [&](std::size_t first, std::size_t last, std::optional<unsigned> day, std::optional<unsigned> month,
                  std::optional<int> year) {
    DateMention m;
    m.raw_span = std::string(s.substr(toks[first].begin, toks[last].end - toks[first].begin));
    m.day = day;
    m.month = month;
    m.year = year;
    m.year_source = year ? YearSource::Explicit : YearSource::Unresolved;
    out.push_back(std::move(m));
  };

  std::size_t i = 0;
  while (i < toks.size()) {
    const auto tok = toks[i].text;
    const bool has_next = i + 1 < toks.size();

    // ISO YYYY-MM-DD: three tokens joined by single hyphens
    if (const auto y = year_of(tok); y && i + 2 < toks.size() && toks[i + 1].begin == toks[i].end + 1 &&
                                     s[toks[i].end] == '-' && toks[i + 2].begin == toks[i + 1].end + 1 &&
                                     s[toks[i + 1].end] == '-') {
      const auto iso = s.substr(toks[i].begin, toks[i + 2].end - toks[i].begin);
      if (const auto d = Date::parse_iso(iso)) {
        emit(i, i + 2, d->day(), d->month(), d->year());
        i += 3;
        continue;
      }
    }

    // early/mid/late Month [YYYY]; "mid-June" arrives as two tokens
    const auto mday = modifier_day(tok);
    const bool hyphen_joined = has_next && toks[i + 1].begin == toks[i].end + 1 && s[toks[i].end] == '-';
    if (mday && has_next && (gap_ok(i, i + 1, false) || hyphen_joined)) {
      if (const auto m = month_of(toks[i + 1].text)) {
        std::optional<int> year;
        std::size_t last = i + 1;
        if (i + 2 < toks.size() && gap_ok(i + 1, i + 2, true)) {
          if (const auto y = year_of(toks[i + 2].text)) {
            year = y;
            last = i + 2;
          }
        }
        emit(i, last, *mday, *m, year);
        i = last + 1;
        continue;
      }
    }

    if (const auto m = month_of(tok)) {
      std::optional<unsigned> day;
      std::optional<int> year;
      std::size_t last = i;
      if (has_next && gap_ok(i, i + 1, true)) {
        if (const auto y = year_of(toks[i + 1].text)) {
          year = y;
          last = i + 1;
        } else if (const auto d = day_of(toks[i + 1].text); d && day_fits(*d, *m, std::nullopt)) {
          day = d;
          last = i + 1;
          if (i + 2 < toks.size() && gap_ok(i + 1, i + 2, true)) {
            if (const auto y2 = year_of(toks[i + 2].text)) {
              year = y2;
              last = i + 2;
            }
          }
          if (year && !day_fits(*day, *m, year)) {
            year.reset();
            last = i + 1;
          }
        }
      }
      // a lone abbreviation ("Jan") is more often a name than a month
      const bool bare = last == i;
      if (!bare || tok.size() > 4 || tok == "May" || tok == "June" || tok == "July") {
        emit(i, last, day, *m, year);
      }
      i = last + 1;
      continue;
    }

    // DD Month [YYYY]
    if (const auto d = day_of(tok); d && has_next && gap_ok(i, i + 1, false)) {
      if (const auto m = month_of(toks[i + 1].text); m && day_fits(*d, *m, std::nullopt)) {
        std::optional<int> year;
        std::size_t last = i + 1;
        if (i + 2 < toks.size() && gap_ok(i + 1, i + 2, true)) {
          if (const auto y = year_of(toks[i + 2].text); y && day_fits(*d, *m, y)) {
            year = y;
            last = i + 2;
          }
        }
        emit(i, last, *d, *m, year);
        i = last + 1;
        continue;
      }
    }

    if (const auto y = year_of(tok)) {
      emit(i, i, std::nullopt, std::nullopt, y);
    }
    ++i;
  }
  return out;
}

DateMention infer_year(DateMention mention, std::string_view sentence, std::string_view paragraph,
                       std::string_view title) {
  if (mention.year) return mention;
  const auto in_sentence = year_tokens(sentence);
  if (in_sentence.size() == 1) {
    mention.year = in_sentence.front();
    mention.year_source = YearSource::Sentence;
    return mention;
  }
  if (in_sentence.empty()) {
    if (const auto in_paragraph = year_tokens(paragraph); in_paragraph.size() == 1) {
      mention.year = in_paragraph.front();
      mention.year_source = YearSource::Paragraph;
      return mention;
    }
    if (const auto in_title = year_tokens(title); in_title.size() == 1) {
      mention.year = in_title.front();
      mention.year_source = YearSource::Title;
      return mention;
    }
  }
  mention.year_source = YearSource::Unresolved;
  return mention;
}

}  // namespace covaud
