#include "covaud/ground_truth.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <stdexcept>

#include "covaud/csv.hpp"
#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud {

using nlohmann::json;

namespace {

constexpr int kImputedDurationDays = 3;

std::optional<std::int64_t> parse_count(std::string_view raw, bool& ok) {
  ok = true;
  std::string digits;
  for (char c : raw) {
    if (c == ',' || c == ' ') continue;
    digits.push_back(c);
  }
  if (digits.empty()) return std::nullopt;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || value < 0) {
    ok = false;
    return std::nullopt;
  }
  return value;
}

std::vector<std::string> split_list(std::string_view raw) {
  std::vector<std::string> out;
  for (auto& part : text::split(raw, ';')) {
    auto t = text::trim(part);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

bool only_landslide_tags(const std::vector<std::string>& tags) {
  if (tags.empty()) return false;
  return std::all_of(tags.begin(), tags.end(), [](const std::string& t) {
    const auto l = text::to_lower(t);
    return l == "landslides" || l == "landslide";
  });
}

bool is_flood_or_storm(std::string_view disaster_type) {
  for (const auto& tok : text::word_tokens(disaster_type)) {
    const auto w = text::to_lower(tok.text);
    if (w == "flood" || w == "floods" || w == "flooding" || w == "storm" || w == "storms") {
      return true;
    }
  }
  return false;
}

struct ColumnMap {
  std::string_view country, start, end, fatalities, affected, id;
};

ColumnMap columns_for(Source source) {
  switch (source) {
    case Source::Floodlist: return {"country", "start_date", "end_date", "fatalities", "", "id"};
    case Source::Emdat: return {"country", "start_date", "end_date", "deaths", "affected", "id"};
    case Source::Dfo: return {"country", "began", "ended", "dead", "displaced", "id"};
  }
  return {};
}

std::vector<std::string_view> required_columns(Source source) {
  switch (source) {
    case Source::Floodlist:
      return {"country", "start_date", "end_date", "fatalities", "locations", "tags", "id"};
    case Source::Emdat:
      return {"iso", "country", "start_date", "end_date", "deaths", "affected", "disaster_type", "id"};
    case Source::Dfo: return {"country", "began", "ended", "dead", "displaced", "id"};
  }
  return {};
}

}  // namespace

std::string_view to_string(Source s) {
  switch (s) {
    case Source::Floodlist: return "FLOODLIST";
    case Source::Emdat: return "EMDAT";
    case Source::Dfo: return "DFO";
  }
  return "?";
}

std::optional<Source> parse_source(std::string_view s) {
  const auto l = text::to_lower(s);
  if (l == "floodlist") return Source::Floodlist;
  if (l == "emdat" || l == "em-dat") return Source::Emdat;
  if (l == "dfo" || l == "dartmouth") return Source::Dfo;
  return std::nullopt;
}

bool ConsolidatedEvent::has_source(Source s) const {
  switch (s) {
    case Source::Floodlist: return in_floodlist;
    case Source::Emdat: return in_emdat;
    case Source::Dfo: return in_dartmouth;
  }
  return false;
}

bool operator==(const ConsolidatedEvent& a, const ConsolidatedEvent& b) {
  return a.event_id == b.event_id && a.country.iso3 == b.country.iso3 && a.start_date == b.start_date &&
         a.end_date == b.end_date && a.fatalities == b.fatalities && a.affected == b.affected &&
         a.locations_by_source == b.locations_by_source && a.native_ids == b.native_ids &&
         a.disaster_type == b.disaster_type && a.in_emdat == b.in_emdat &&
         a.in_dartmouth == b.in_dartmouth && a.in_floodlist == b.in_floodlist &&
         a.fatalities_provenance == b.fatalities_provenance;
}

ParseResult parse_source_records(std::istream& in, Source source, std::string_view file_label) {
  ParseResult result;
  csv::Reader reader(in);
  const auto header_row = reader.next();
  if (!header_row) return result;  // empty file
  const csv::Header header(*header_row);
  header.require(required_columns(source));
  const auto cols = columns_for(source);
  const std::string label(file_label.empty() ? to_string(source) : file_label);

  std::set<std::string, std::less<>> seen_ids;
  while (true) {
    std::optional<std::vector<std::string>> row;
    try {
      row = reader.next();
    } catch (const ParseError& e) {
      result.rejects.push_back({label, reader.line(), e.what()});
      break;
    }
    if (!row) break;
    const auto line = reader.line();
    auto reject = [&](std::string reason) { result.rejects.push_back({label, line, std::move(reason)}); };

    SourceRecord rec;
    rec.source = source;
    rec.country_raw = header.get(*row, cols.country);
    if (source == Source::Emdat && rec.country_raw.empty()) {
      rec.country_raw = header.get(*row, "iso");
    }
    if (rec.country_raw.empty()) {
      reject("empty country");
      continue;
    }
    const auto start_raw = header.get(*row, cols.start);
    const auto start = Date::parse_iso(start_raw);
    if (!start) {
      reject("bad start date '" + start_raw + "'");
      continue;
    }
    rec.start_date = *start;
    const auto end_raw = header.get(*row, cols.end);
    if (!end_raw.empty()) {
      const auto end = Date::parse_iso(end_raw);
      if (!end) {
        reject("bad end date '" + end_raw + "'");
        continue;
      }
      if (*end < *start) {
        reject("end date " + end_raw + " precedes start date " + start_raw);
        continue;
      }
      rec.end_date = *end;
    }
    bool count_ok = true;
    const auto fatalities_raw = header.get(*row, cols.fatalities);
    rec.fatalities = parse_count(fatalities_raw, count_ok);
    if (!count_ok) {
      reject("bad fatalities '" + fatalities_raw + "'");
      continue;
    }
    if (!cols.affected.empty()) {
      auto affected = header.get(*row, cols.affected);
      if (!affected.empty()) rec.affected = std::move(affected);
    }
    rec.native_id = header.get(*row, cols.id);
    if (rec.native_id.empty()) {
      reject("empty id");
      continue;
    }

    switch (source) {
      case Source::Floodlist: {
        rec.locations = split_list(header.get(*row, "locations"));
        if (only_landslide_tags(split_list(header.get(*row, "tags")))) {
          ++result.excluded;
          continue;
        }
        rec.disaster_type = "Flood";
        break;
      }
      case Source::Emdat: {
        rec.disaster_type = header.get(*row, "disaster_type");
        if (!is_flood_or_storm(rec.disaster_type)) {
          ++result.excluded;
          continue;
        }
        // one row per affected country shares the disaster number
        const auto iso = header.get(*row, "iso");
        if (!iso.empty()) {
          const auto suffix = "-" + iso;
          if (rec.native_id.size() < suffix.size() ||
              rec.native_id.compare(rec.native_id.size() - suffix.size(), suffix.size(), suffix) != 0) {
            rec.native_id += suffix;
          }
        }
        break;
      }
      case Source::Dfo: rec.disaster_type = "Flood"; break;
    }

    if (!seen_ids.insert(rec.native_id).second) {
      reject("duplicate id '" + rec.native_id + "'");
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

ParseResult parse_source_file(const std::filesystem::path& path, Source source) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_source_records(in, source, path.filename().string());
}

std::optional<CountryCode> normalize_country(const CountryRegistry& registry, std::string_view name_raw) {
  return registry.normalize(name_raw);
}

SourceRecord impute_end_date(SourceRecord record) {
  if (!record.end_date) record.end_date = record.start_date.plus_days(kImputedDurationDays);
  return record;
}

PreparedRecords prepare_records(std::span<const SourceRecord> records, const CountryRegistry& registry) {
  PreparedRecords out;
  for (const auto& r : records) {
    auto country = normalize_country(registry, r.country_raw);
    if (!country) {
      out.rejects.push_back({std::string(to_string(r.source)), 0,
                             "unresolved country '" + r.country_raw + "' (id " + r.native_id + ")"});
      continue;
    }
    out.records.push_back({impute_end_date(r), std::move(*country)});
  }
  return out;
}

namespace {

ConsolidatedEvent build_event(std::span<const NormalizedRecord* const> members) {
  ConsolidatedEvent ev;
  ev.country = members.front()->country;
  ev.start_date = members.front()->record.start_date;
  ev.end_date = *members.front()->record.end_date;

  std::vector<const NormalizedRecord*> ordered(members.begin(), members.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return SourceRef{a->record.source, a->record.native_id} < SourceRef{b->record.source, b->record.native_id};
  });

  std::set<std::string> types;
  std::set<std::string> affected;
  for (const auto* m : ordered) {
    const auto& r = m->record;
    ev.start_date = std::min(ev.start_date, r.start_date);
    ev.end_date = std::max(ev.end_date, *r.end_date);
    ev.native_ids.push_back({r.source, r.native_id});
    switch (r.source) {
      case Source::Floodlist: ev.in_floodlist = true; break;
      case Source::Emdat: ev.in_emdat = true; break;
      case Source::Dfo: ev.in_dartmouth = true; break;
    }
    auto& locs = ev.locations_by_source[r.source];
    for (const auto& l : r.locations) {
      if (std::find(locs.begin(), locs.end(), l) == locs.end()) locs.push_back(l);
    }
    if (r.fatalities) {
      ev.fatalities = std::max(ev.fatalities.value_or(0), *r.fatalities);
      ev.fatalities_provenance.push_back({{r.source, r.native_id}, *r.fatalities});
    }
    if (r.affected && !r.affected->empty()) affected.insert(*r.affected);
    if (!r.disaster_type.empty()) types.insert(r.disaster_type);
  }
  for (const auto& t : types) {
    if (!ev.disaster_type.empty()) ev.disaster_type += ", ";
    ev.disaster_type += t;
  }
  for (const auto& a : affected) {
    ev.affected = ev.affected ? *ev.affected + " | " + a : a;
  }
  auto start = ev.start_date.iso();
  start.erase(std::remove(start.begin(), start.end(), '-'), start.end());
  // same-country events are disjoint, so the start day is unique per country
  ev.event_id = ev.country.iso3 + "-" + start;
  return ev;
}

}  // namespace

std::vector<ConsolidatedEvent> consolidate(std::span<const NormalizedRecord> records) {
  std::map<std::string, std::vector<const NormalizedRecord*>> by_country;
  for (const auto& r : records) {
    if (!r.record.end_date) {
      throw std::invalid_argument("consolidate: record " + r.record.native_id + " has no end date");
    }
    by_country[r.country.iso3].push_back(&r);
  }

  std::vector<ConsolidatedEvent> events;
  for (auto& [iso3, group] : by_country) {
    std::sort(group.begin(), group.end(), [](const auto* a, const auto* b) {
      if (a->record.start_date != b->record.start_date) return a->record.start_date < b->record.start_date;
      return SourceRef{a->record.source, a->record.native_id} < SourceRef{b->record.source, b->record.native_id};
    });
    // Sweep by start date; a record joins the open cluster when it starts on
    // or before the latest end seen so far.
    std::size_t first = 0;
    Date cluster_end = *group.front()->record.end_date;
    for (std::size_t i = 1; i <= group.size(); ++i) {
      if (i < group.size() && group[i]->record.start_date <= cluster_end) {
        cluster_end = std::max(cluster_end, *group[i]->record.end_date);
        continue;
      }
      events.push_back(build_event(std::span(group).subspan(first, i - first)));
      if (i < group.size()) {
        first = i;
        cluster_end = *group[i]->record.end_date;
      }
    }
  }
  std::sort(events.begin(), events.end(), [](const ConsolidatedEvent& a, const ConsolidatedEvent& b) {
    if (a.country.iso3 != b.country.iso3) return a.country.iso3 < b.country.iso3;
    if (a.start_date != b.start_date) return a.start_date < b.start_date;
    return a.event_id < b.event_id;
  });
  return events;
}

std::vector<ConsolidatedEvent> filter_multi_source(std::span<const ConsolidatedEvent> events) {
  std::vector<ConsolidatedEvent> out;
  std::copy_if(events.begin(), events.end(), std::back_inserter(out),
               [](const ConsolidatedEvent& e) { return e.source_count() >= 2; });
  return out;
}

unsigned source_mask(const ConsolidatedEvent& e) {
  return (e.in_floodlist ? 1U : 0U) | (e.in_emdat ? 2U : 0U) | (e.in_dartmouth ? 4U : 0U);
}

VennCounts venn_counts(std::span<const ConsolidatedEvent> events) {
  VennCounts counts{};
  for (const auto& e : events) ++counts[source_mask(e)];
  return counts;
}

std::string venn_label(unsigned mask) {
  std::string label;
  for (auto s : kAllSources) {
    if ((mask & (1U << static_cast<unsigned>(s))) == 0) continue;
    if (!label.empty()) label += "+";
    label += text::to_lower(to_string(s));
  }
  return label;
}

json venn_to_json(const VennCounts& counts) {
  json j = json::object();
  for (unsigned mask = 1; mask < 8; ++mask) j[venn_label(mask)] = counts[mask];
  return j;
}

json to_json(const ConsolidatedEvent& e) {
  json locs = json::object();
  for (const auto& [src, list] : e.locations_by_source) locs[std::string(to_string(src))] = list;
  json ids = json::array();
  for (const auto& ref : e.native_ids) ids.push_back({{"source", to_string(ref.source)}, {"id", ref.id}});
  json prov = json::array();
  for (const auto& f : e.fatalities_provenance) {
    prov.push_back({{"source", to_string(f.member.source)}, {"id", f.member.id}, {"value", f.value}});
  }
  return json{{"event_id", e.event_id},
              {"country", e.country.iso3},
              {"start_date", e.start_date.iso()},
              {"end_date", e.end_date.iso()},
              {"fatalities", e.fatalities ? json(*e.fatalities) : json(nullptr)},
              {"affected", e.affected ? json(*e.affected) : json(nullptr)},
              {"locations_by_source", locs},
              {"native_ids", ids},
              {"disaster_type", e.disaster_type},
              {"in_emdat", e.in_emdat},
              {"in_dartmouth", e.in_dartmouth},
              {"in_floodlist", e.in_floodlist},
              {"fatalities_provenance", prov}};
}

ConsolidatedEvent event_from_json(const json& j, const CountryRegistry& registry) {
  try {
    ConsolidatedEvent e;
    e.event_id = j.at("event_id").get<std::string>();
    const auto iso3 = j.at("country").get<std::string>();
    const auto* country = registry.by_iso3(iso3);
    if (country == nullptr) throw ParseError("unknown country " + iso3);
    e.country = *country;
    const auto start = Date::parse_iso(j.at("start_date").get<std::string>());
    const auto end = Date::parse_iso(j.at("end_date").get<std::string>());
    if (!start || !end || *end < *start) throw ParseError("bad date range in event " + e.event_id);
    e.start_date = *start;
    e.end_date = *end;
    if (j.contains("fatalities") && !j["fatalities"].is_null()) e.fatalities = j["fatalities"].get<std::int64_t>();
    if (j.contains("affected") && !j["affected"].is_null()) e.affected = j["affected"].get<std::string>();
    if (j.contains("locations_by_source")) {
      for (const auto& [k, v] : j["locations_by_source"].items()) {
        const auto src = parse_source(k);
        if (!src) throw ParseError("unknown source " + k);
        e.locations_by_source[*src] = v.get<std::vector<std::string>>();
      }
    }
    for (const auto& ref : j.at("native_ids")) {
      const auto src = parse_source(ref.at("source").get<std::string>());
      if (!src) throw ParseError("unknown source in native_ids");
      e.native_ids.push_back({*src, ref.at("id").get<std::string>()});
    }
    e.disaster_type = j.value("disaster_type", "");
    e.in_emdat = j.at("in_emdat").get<bool>();
    e.in_dartmouth = j.at("in_dartmouth").get<bool>();
    e.in_floodlist = j.at("in_floodlist").get<bool>();
    if (j.contains("fatalities_provenance")) {
      for (const auto& f : j["fatalities_provenance"]) {
        const auto src = parse_source(f.at("source").get<std::string>());
        if (!src) throw ParseError("unknown source in fatalities_provenance");
        e.fatalities_provenance.push_back({{*src, f.at("id").get<std::string>()}, f.at("value").get<std::int64_t>()});
      }
    }
    return e;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed event: ") + ex.what());
  }
}

void write_events_jsonl(std::ostream& out, std::span<const ConsolidatedEvent> events) {
  for (const auto& e : events) out << to_json(e).dump() << '\n';
}

std::vector<ConsolidatedEvent> read_events_jsonl(std::istream& in, const CountryRegistry& registry) {
  std::vector<ConsolidatedEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      events.push_back(event_from_json(json::parse(line), registry));
    } catch (const json::exception& ex) {
      throw ParseError("events line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const ParseError& ex) {
      throw ParseError("events line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return events;
}

json to_json(const RejectEntry& r) {
  return json{{"file", r.file}, {"line", r.line}, {"reason", r.reason}};
}

}  // namespace covaud
