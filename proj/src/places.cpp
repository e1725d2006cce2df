#include "covaud/places.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud {

using nlohmann::json;

std::string_view to_string(ResolverStage s) {
  switch (s) {
    case ResolverStage::Gazetteer: return "GAZETTEER";
    case ResolverStage::RemoteGeocoder: return "REMOTE_GEOCODER";
    case ResolverStage::ContextInference: return "CONTEXT_INFERENCE";
    case ResolverStage::Unresolved: return "UNRESOLVED";
  }
  return "UNRESOLVED";
}

std::optional<ResolverStage> parse_resolver_stage(std::string_view s) {
  for (auto v : {ResolverStage::Gazetteer, ResolverStage::RemoteGeocoder, ResolverStage::ContextInference,
                 ResolverStage::Unresolved}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

json to_json(const PlaceMention& p) {
  return json{{"raw_span", p.raw_span},
              {"resolved", p.resolved ? json(p.resolved->iso3) : json(nullptr)},
              {"resolver_stage", to_string(p.resolver_stage)}};
}

Gazetteer Gazetteer::load(const std::filesystem::path& tsv) {
  std::ifstream in(tsv);
  if (!in) throw IoError("cannot open gazetteer " + tsv.string());
  return from_stream(in);
}

Gazetteer Gazetteer::from_stream(std::istream& in) {
  Gazetteer g;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = text::split(line, '\t');
    if (f.size() < 3) throw ParseError("gazetteer line " + std::to_string(lineno) + ": expected 3 columns");
    GazetteerEntry e{text::trim(f[0]), text::trim(f[1]), 0.0};
    try {
      e.importance = std::stod(f[2]);
    } catch (const std::exception&) {
      throw ParseError("gazetteer line " + std::to_string(lineno) + ": bad importance '" + f[2] + "'");
    }
    if (e.placename.empty() || e.importance < 0) {
      throw ParseError("gazetteer line " + std::to_string(lineno) + ": invalid entry");
    }
    g.add(std::move(e));
  }
  return g;
}

void Gazetteer::add(GazetteerEntry entry) {
  const auto name = entry.placename;
  if (auto* rows = phrases_.find_or_add(name, {})) rows->push_back(std::move(entry));
}

std::vector<GazetteerEntry> Gazetteer::lookup(std::string_view placename) const {
  const auto* rows = phrases_.find(placename);
  return rows ? *rows : std::vector<GazetteerEntry>{};
}

std::vector<std::string> GazetteerExtractor::extract(std::string_view source) const {
  std::vector<std::string> out;
  for (const auto& hit : gazetteer_.phrases().scan(source)) {
    out.emplace_back(source.substr(hit.begin, hit.end - hit.begin));
  }
  return out;
}

std::vector<PlaceMention> extract_placenames(std::string_view source, const PlacenameExtractor& extractor) {
  std::vector<PlaceMention> out;
  std::set<std::string> seen;
  for (auto& span : extractor.extract(source)) {
    if (span.empty() || !seen.insert(span).second) continue;
    out.push_back({std::move(span), std::nullopt, ResolverStage::Unresolved});
  }
  return out;
}

std::string_view to_string(DateOrigin o) { return o == DateOrigin::Title ? "TITLE" : "SENTENCE"; }

json to_json(const ResolvedCandidate& r) {
  return json{{"candidate", to_json(r.candidate)},
              {"country", r.country.iso3},
              {"place", to_json(r.place)},
              {"date", to_json(r.date)},
              {"date_origin", to_string(r.date_origin)}};
}

ResolvedCandidate resolved_candidate_from_json(const json& j, const CountryRegistry& registry) {
  try {
    ResolvedCandidate r;
    r.candidate = candidate_from_json(j.at("candidate"));
    const auto iso3 = j.at("country").get<std::string>();
    const auto* country = registry.by_iso3(iso3);
    if (country == nullptr) throw ParseError("unknown country " + iso3);
    r.country = *country;
    const auto& place = j.at("place");
    r.place.raw_span = place.at("raw_span").get<std::string>();
    const auto stage = parse_resolver_stage(place.at("resolver_stage").get<std::string>());
    if (!stage) throw ParseError("unknown resolver stage");
    r.place.resolver_stage = *stage;
    if (!place.at("resolved").is_null()) {
      const auto* pc = registry.by_iso3(place["resolved"].get<std::string>());
      if (pc == nullptr) throw ParseError("unknown place country");
      r.place.resolved = *pc;
    }
    r.date = date_mention_from_json(j.at("date"));
    if (!r.date.resolved()) throw ParseError("resolved candidate with partial date");
    r.date_origin = j.value("date_origin", "SENTENCE") == "TITLE" ? DateOrigin::Title : DateOrigin::Sentence;
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed resolved candidate: ") + e.what());
  }
}

std::vector<ResolvedCandidate> expand_candidates(const CandidateSentence& candidate,
                                                 std::span<const LocatedDate> dates,
                                                 std::span<const PlaceMention> places) {
  std::vector<const PlaceMention*> countries;
  std::set<std::string> seen;
  for (const auto& p : places) {
    if (p.resolved && seen.insert(p.resolved->iso3).second) countries.push_back(&p);
  }
  std::vector<const LocatedDate*> usable;
  for (const auto& d : dates) {
    if (d.date.resolved()) usable.push_back(&d);
  }
  std::vector<ResolvedCandidate> out;
  if (countries.empty() || usable.empty()) return out;
  out.reserve(countries.size() * usable.size());
  for (const auto* p : countries) {
    for (const auto* d : usable) {
      out.push_back({candidate, *p->resolved, *p, d->date, d->origin});
    }
  }
  return out;
}

}  // namespace covaud
