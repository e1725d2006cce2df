#include "covaud/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "covaud/csv.hpp"
#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud {

using nlohmann::json;

std::string_view to_string(GniGroup g) {
  switch (g) {
    case GniGroup::Low: return "Low income";
    case GniGroup::LowerMiddle: return "Lower middle income";
    case GniGroup::UpperMiddle: return "Upper middle income";
    case GniGroup::High: return "High income";
  }
  return "Low income";
}

std::optional<GniGroup> parse_gni_group(std::string_view s) {
  const auto k = text::normalize_key(s);
  if (k == "low income" || k == "low" || k == "lic") return GniGroup::Low;
  if (k == "lower middle income" || k == "lower middle" || k == "lmc" || k == "lmic") return GniGroup::LowerMiddle;
  if (k == "upper middle income" || k == "upper middle" || k == "umc" || k == "umic") return GniGroup::UpperMiddle;
  if (k == "high income" || k == "high" || k == "hic") return GniGroup::High;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

IndicatorTable IndicatorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open indicators file " + path.string());
  return from_stream(in, path.filename().string());
}

namespace {

std::optional<double> number_cell(const std::string& raw, const std::string& where, std::string_view column,
                                  double lo, double hi) {
  if (raw.empty()) return std::nullopt;
  double v = 0;
  try {
    std::size_t used = 0;
    v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ParseError(where + ": " + std::string(column) + " is not a number: '" + raw + "'");
  }
  if (!std::isfinite(v) || v < lo || v > hi) {
    throw ParseError(where + ": " + std::string(column) + " out of range: " + raw);
  }
  return v;
}

}  // namespace

IndicatorTable IndicatorTable::from_stream(std::istream& in, const std::string& label) {
  csv::Reader reader(in);
  const auto header_row = reader.next();
  if (!header_row) throw ParseError(label + ": empty indicators file");
  const csv::Header header(*header_row);
  header.require({"iso3", "gdp_per_capita", "gni_group", "vulnerability", "lack_of_coping", "english_pct",
                  "population"});

  IndicatorTable table;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  while (const auto row = reader.next()) {
    const auto where = label + ":" + std::to_string(reader.line());
    CountryIndicators c;
    c.iso3 = text::to_upper(header.get(*row, "iso3"));
    if (c.iso3.empty()) throw ParseError(where + ": empty iso3");
    c.gdp_per_capita = number_cell(header.get(*row, "gdp_per_capita"), where, "gdp_per_capita", 0, kInf);
    if (const auto g = header.get(*row, "gni_group"); !g.empty()) {
      c.gni_group = parse_gni_group(g);
      if (!c.gni_group) throw ParseError(where + ": unknown gni_group '" + g + "'");
    }
    c.vulnerability = number_cell(header.get(*row, "vulnerability"), where, "vulnerability", 0, 10);
    c.lack_of_coping = number_cell(header.get(*row, "lack_of_coping"), where, "lack_of_coping", 0, 10);
    c.english_pct = number_cell(header.get(*row, "english_pct"), where, "english_pct", 0, 100);
    if (const auto p = number_cell(header.get(*row, "population"), where, "population", 0, kInf)) {
      c.population = static_cast<std::int64_t>(std::llround(*p));
    }
    if (header.has("continent")) {
      if (const auto raw = header.get(*row, "continent"); !raw.empty()) {
        c.continent = parse_continent(raw);
        if (!c.continent) throw ParseError(where + ": unknown continent '" + raw + "'");
      }
    }
    if (table.find(c.iso3) != nullptr) throw ParseError(where + ": duplicate iso3 " + c.iso3);
    table.add(std::move(c));
  }
  return table;
}

void IndicatorTable::add(CountryIndicators row) {
  auto key = row.iso3;
  rows_.insert_or_assign(std::move(key), std::move(row));
}

const CountryIndicators* IndicatorTable::find(std::string_view iso3) const {
  const auto it = rows_.find(iso3);
  return it == rows_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Axis a) {
  switch (a) {
    case Axis::Continent: return "continent";
    case Axis::Gdp: return "gdp";
    case Axis::Gni: return "gni";
    case Axis::Vulnerability: return "vuln";
    case Axis::English: return "english";
    case Axis::Population: return "population";
    case Axis::Fatalities: return "fatalities";
    case Axis::Month: return "month";
    case Axis::Country: return "country";
  }
  return "continent";
}

std::optional<Axis> parse_axis(std::string_view s) {
  const auto v = text::to_lower(text::trim(s));
  for (const auto a : kAllAxes) {
    if (to_string(a) == v) return a;
  }
  if (v == "vulnerability") return Axis::Vulnerability;
  return std::nullopt;
}

std::vector<Axis> parse_axes(std::string_view list) {
  std::vector<Axis> out;
  for (const auto& part : text::split(list, ',')) {
    if (text::trim(part).empty()) continue;
    const auto a = parse_axis(part);
    if (!a) throw ConfigError("unknown axis '" + text::trim(part) + "'");
    if (std::find(out.begin(), out.end(), *a) == out.end()) out.push_back(*a);
  }
  if (out.empty()) throw ConfigError("no axes selected");
  return out;
}

std::string gdp_bucket(double gdp) {
  if (gdp < 812) return "Low income";
  if (gdp < 2218) return "Lower middle income";
  if (gdp < 5484) return "Middle income";
  if (gdp < 9200) return "Upper middle income";
  if (gdp < 44714) return "High income";
  return "Very high income";
}

double combined_vulnerability(double vulnerability, double lack_of_coping) {
  return std::sqrt(vulnerability * lack_of_coping);
}

std::string vulnerability_bucket(double combined) {
  if (combined < 2) return "0-2";
  if (combined < 4) return "2-4";
  if (combined < 6) return "4-6";
  if (combined < 8) return "6-8";
  return "8-10";
}

std::string population_group(std::int64_t population) {
  if (population < 754'394) return "G1";
  if (population < 6'465'513) return "G2";
  if (population < 24'992'369) return "G3";
  return "G4";
}

std::string fatalities_bucket(std::optional<std::int64_t> fatalities) {
  const auto n = fatalities.value_or(0);
  if (n <= 0) return "0";
  if (n < 10) return "1-9";
  if (n < 100) return "10-99";
  if (n < 2000) return "100-1999";
  return "2000+";
}

std::string english_bucket(double pct) {
  if (pct < 20) return "<20";
  if (pct < 40) return "20-40";
  if (pct < 60) return "40-60";
  if (pct < 80) return "60-80";
  return "80+";
}

std::vector<std::string> axis_buckets(Axis axis) {
  switch (axis) {
    case Axis::Continent: {
      std::vector<std::string> out;
      for (const auto c : kAllContinents) out.emplace_back(display_name(c));
      return out;
    }
    case Axis::Gdp:
      return {"Low income", "Lower middle income", "Middle income", "Upper middle income", "High income",
              "Very high income"};
    case Axis::Gni: return {"Low income", "Lower middle income", "Upper middle income", "High income"};
    case Axis::Vulnerability: return {"0-2", "2-4", "4-6", "6-8", "8-10"};
    case Axis::English: return {"<20", "20-40", "40-60", "60-80", "80+"};
    case Axis::Population: return {"G1", "G2", "G3", "G4"};
    case Axis::Fatalities: return {"0", "1-9", "10-99", "100-1999"};
    case Axis::Month:
    case Axis::Country: return {};
  }
  return {};
}

std::optional<UnknownFatalities> parse_unknown_fatalities(std::string_view s) {
  const auto v = text::to_lower(text::trim(s));
  if (v == "zero") return UnknownFatalities::Zero;
  if (v == "exclude") return UnknownFatalities::Exclude;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

std::string month_label(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", d.year(), d.month());
  return buf;
}

std::string bucket_of(const ConsolidatedEvent& e, const IndicatorTable& indicators, Axis axis,
                      const StratifyOptions& options) {
  const auto* ind = indicators.find(e.country.iso3);
  switch (axis) {
    case Axis::Continent:
      return std::string(display_name(ind && ind->continent ? *ind->continent : e.country.continent));
    case Axis::Gdp:
      return ind && ind->gdp_per_capita ? gdp_bucket(*ind->gdp_per_capita) : std::string(kUnknownBucket);
    case Axis::Gni:
      return ind && ind->gni_group ? std::string(to_string(*ind->gni_group)) : std::string(kUnknownBucket);
    case Axis::Vulnerability:
      if (ind && ind->vulnerability && ind->lack_of_coping) {
        return vulnerability_bucket(combined_vulnerability(*ind->vulnerability, *ind->lack_of_coping));
      }
      return std::string(kUnknownBucket);
    case Axis::English:
      return ind && ind->english_pct ? english_bucket(*ind->english_pct) : std::string(kUnknownBucket);
    case Axis::Population:
      return ind && ind->population ? population_group(*ind->population) : std::string(kUnknownBucket);
    case Axis::Fatalities:
      if (!e.fatalities && options.unknown_fatalities == UnknownFatalities::Exclude) {
        return std::string(kUnknownBucket);
      }
      return fatalities_bucket(e.fatalities);
    case Axis::Month: return month_label(e.start_date);
    case Axis::Country: return e.country.iso3;
  }
  return std::string(kUnknownBucket);
}

StratumReport make_stratum(Axis axis, std::string label, std::size_t gt, std::size_t matched) {
  StratumReport s{axis, std::move(label), gt, matched, std::nullopt};
  if (const auto p = percentage(matched, gt)) s.hit_rate_pct = round_half_up(*p);
  return s;
}

}  // namespace

AxisReport stratify(std::span<const ConsolidatedEvent> events, std::span<const MatchResult> matches,
                    const IndicatorTable& indicators, Axis axis, const StratifyOptions& options) {
  std::set<std::string_view> matched;
  for (const auto& m : matches) matched.insert(m.event_id);

  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& e : events) {
    auto& c = counts[bucket_of(e, indicators, axis, options)];
    ++c.first;
    if (matched.count(e.event_id) != 0) ++c.second;
  }

  AxisReport report;
  report.axis = axis;
  const auto take = [&](const std::string& label) {
    const auto it = counts.find(label);
    const auto c = it == counts.end() ? std::pair<std::size_t, std::size_t>{0, 0} : it->second;
    if (it != counts.end()) counts.erase(it);
    return c;
  };

  if (axis == Axis::Country) {
    std::vector<StratumReport> rows;
    std::size_t other_gt = 0;
    std::size_t other_matched = 0;
    for (const auto& [label, c] : counts) {
      if (c.first >= options.min_country_events) {
        rows.push_back(make_stratum(axis, label, c.first, c.second));
      } else {
        other_gt += c.first;
        other_matched += c.second;
      }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return a.ground_truth_count > b.ground_truth_count;
    });
    report.strata = std::move(rows);
    if (other_gt > 0) {
      report.separate.push_back(make_stratum(
          axis, "fewer than " + std::to_string(options.min_country_events) + " events", other_gt, other_matched));
    }
    return report;
  }

  if (axis == Axis::Month) {
    for (const auto& [label, c] : counts) report.strata.push_back(make_stratum(axis, label, c.first, c.second));
    return report;
  }

  for (const auto& label : axis_buckets(axis)) {
    const auto c = take(label);
    report.strata.push_back(make_stratum(axis, label, c.first, c.second));
  }
  for (const auto& [label, c] : counts) report.separate.push_back(make_stratum(axis, label, c.first, c.second));
  return report;
}

json to_json(const StratumReport& s) {
  return json{{"axis", to_string(s.axis)},
              {"bucket_label", s.bucket_label},
              {"ground_truth_count", s.ground_truth_count},
              {"matched_count", s.matched_count},
              {"hit_rate_pct", s.hit_rate_pct ? json(*s.hit_rate_pct) : json(nullptr)}};
}

json to_json(const AxisReport& r) {
  json strata = json::array();
  for (const auto& s : r.strata) strata.push_back(to_json(s));
  json separate = json::array();
  for (const auto& s : r.separate) separate.push_back(to_json(s));
  return json{{"strata", std::move(strata)}, {"separate", std::move(separate)}};
}

namespace {

std::string format_pct(const std::optional<double>& v) {
  if (!v) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

void write_axis_csv(std::ostream& out, const AxisReport& report) {
  out << "axis,bucket,ground_truth_count,matched_count,hit_rate_pct,separate\n";
  const auto row = [&](const StratumReport& s, bool separate) {
    out << to_string(s.axis) << ',' << csv::escape(s.bucket_label) << ',' << s.ground_truth_count << ','
        << s.matched_count << ',' << format_pct(s.hit_rate_pct) << ',' << (separate ? 1 : 0) << '\n';
  };
  for (const auto& s : report.strata) row(s, false);
  for (const auto& s : report.separate) row(s, true);
}

// ---------------------------------------------------------------------------

std::optional<std::string> registrable_domain(std::string_view url) {
  std::string_view s = text::trim_view(url);
  if (s.empty()) return std::nullopt;
  if (const auto scheme = s.find("://"); scheme != std::string_view::npos) {
    const auto name = s.substr(0, scheme);
    if (name.empty() || !std::all_of(name.begin(), name.end(), [](char c) {
          return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
        })) {
      return std::nullopt;
    }
    s.remove_prefix(scheme + 3);
  } else if (s.starts_with("//")) {
    s.remove_prefix(2);
  }
  s = s.substr(0, s.find_first_of("/?#"));
  if (const auto at = s.rfind('@'); at != std::string_view::npos) s.remove_prefix(at + 1);
  if (s.starts_with('[')) return std::nullopt;  // IPv6 literal
  if (const auto colon = s.find(':'); colon != std::string_view::npos) s = s.substr(0, colon);
  std::string host = text::to_lower(s);
  while (!host.empty() && host.back() == '.') host.pop_back();
  if (host.starts_with("www.")) host.erase(0, 4);
  if (host.empty() || host.find('.') == std::string::npos || host.front() == '.' ||
      host.find("..") != std::string::npos) {
    return std::nullopt;
  }
  const bool valid = std::all_of(host.begin(), host.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
  });
  if (!valid) return std::nullopt;
  return host;
}

DomainCounts extract_reference_domains(std::span<const CandidateSentence> matched, std::size_t top_k) {
  DomainCounts out;
  std::map<std::string, std::size_t> counts;
  for (const auto& c : matched) {
    for (const auto& url : c.citations) {
      ++out.total_urls;
      if (auto d = registrable_domain(url)) {
        ++counts[*d];
      } else {
        ++out.unparsable;
      }
    }
  }
  out.top.assign(counts.begin(), counts.end());
  std::stable_sort(out.top.begin(), out.top.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.top.size() > top_k) out.top.resize(top_k);
  return out;
}

json to_json(const DomainCounts& d) {
  json top = json::array();
  for (const auto& [domain, count] : d.top) top.push_back(json{{"domain", domain}, {"count", count}});
  return json{{"top", std::move(top)}, {"total_urls", d.total_urls}, {"unparsable", d.unparsable}};
}

void write_domains_csv(std::ostream& out, const DomainCounts& d) {
  out << "domain,count\n";
  for (const auto& [domain, count] : d.top) out << csv::escape(domain) << ',' << count << '\n';
}

}  // namespace covaud
