#include "covaud/extract.hpp"

#include <algorithm>
#include <atomic>
#include <future>

#include "covaud/dates.hpp"
#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud {

using nlohmann::json;

std::vector<LocatedDate> candidate_dates(const CandidateSentence& c) {
  std::vector<LocatedDate> out;
  for (auto& d : find_dates(c.text)) {
    out.push_back({infer_year(std::move(d), c.text, c.paragraph, c.title), DateOrigin::Sentence});
  }
  for (auto& d : find_dates(c.title)) {
    out.push_back({infer_year(std::move(d), c.title, "", ""), DateOrigin::Title});
  }
  return out;
}

Extraction extract_candidate(const CandidateSentence& c, const PlacenameExtractor& extractor,
                             GeoResolver& resolver) {
  Extraction x;
  x.dates = candidate_dates(c);
  x.places = extract_placenames(c.text, extractor);
  for (auto& p : x.places) p = resolver.resolve(p.raw_span, c.text, c.title);
  if (x.places.empty()) {
    if (auto country = resolver.infer_context(c.text, c.title)) {
      x.places.push_back({"", std::move(country), ResolverStage::ContextInference});
    }
  }
  x.resolved = expand_candidates(c, x.dates, x.places);
  return x;
}

json to_json(const ExtractStats& s) {
  json stages = json::object();
  for (const auto& [stage, n] : s.stage_counts) stages[std::string(to_string(stage))] = n;
  return json{{"candidates", s.candidates},
              {"resolved", s.resolved},
              {"discarded", s.discarded},
              {"without_country", s.without_country},
              {"without_date", s.without_date},
              {"placenames_by_stage", std::move(stages)}};
}

ExtractResult extract_all(std::span<const CandidateSentence> candidates, const PlacenameExtractor& extractor,
                          GeoResolver& resolver, unsigned jobs) {
  std::vector<Extraction> slots(candidates.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < candidates.size(); i = next++) {
      slots[i] = extract_candidate(candidates[i], extractor, resolver);
    }
  };
  jobs = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, candidates.size()))));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }

  ExtractResult out;
  out.stats.candidates = candidates.size();
  for (auto& x : slots) {
    for (const auto& p : x.places) ++out.stats.stage_counts[p.resolver_stage];
    const bool has_country = std::any_of(x.places.begin(), x.places.end(), [](const auto& p) { return p.resolved; });
    const bool has_date = std::any_of(x.dates.begin(), x.dates.end(), [](const auto& d) { return d.date.resolved(); });
    if (!has_country) ++out.stats.without_country;
    if (!has_date) ++out.stats.without_date;
    if (x.resolved.empty()) {
      ++out.stats.discarded;
      continue;
    }
    ++out.stats.resolved;
    out.resolved.insert(out.resolved.end(), std::make_move_iterator(x.resolved.begin()),
                        std::make_move_iterator(x.resolved.end()));
  }
  return out;
}

void write_resolved_jsonl(std::ostream& out, std::span<const ResolvedCandidate> resolved) {
  for (const auto& r : resolved) out << to_json(r).dump() << '\n';
}

std::vector<ResolvedCandidate> read_resolved_jsonl(std::istream& in, const CountryRegistry& registry) {
  std::vector<ResolvedCandidate> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(resolved_candidate_from_json(json::parse(line), registry));
    } catch (const json::exception& e) {
      throw ParseError("resolved line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("resolved line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace covaud
