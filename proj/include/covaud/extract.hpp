#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "covaud/corpus.hpp"
#include "covaud/geo.hpp"
#include "covaud/places.hpp"

namespace covaud {

/// Dates of a candidate: sentence mentions (year inferred from sentence,
/// paragraph, title) followed by title mentions (year from the title).
std::vector<LocatedDate> candidate_dates(const CandidateSentence& candidate);

struct Extraction {
  std::vector<LocatedDate> dates;
  std::vector<PlaceMention> places;
  std::vector<ResolvedCandidate> resolved;
};

/// Placenames run through the resolver cascade. A sentence without any
/// placename is handed to context inference as a whole and, when that
/// finds a country, gets a mention with an empty raw_span.
Extraction extract_candidate(const CandidateSentence& candidate, const PlacenameExtractor& extractor,
                             GeoResolver& resolver);

struct ExtractStats {
  std::size_t candidates = 0;
  std::size_t resolved = 0;
  std::size_t discarded = 0;
  std::size_t without_country = 0;
  std::size_t without_date = 0;
  std::map<ResolverStage, std::size_t> stage_counts;
};

nlohmann::json to_json(const ExtractStats& s);

struct ExtractResult {
  std::vector<ResolvedCandidate> resolved;
  ExtractStats stats;
};

/// Output keeps input order.
ExtractResult extract_all(std::span<const CandidateSentence> candidates, const PlacenameExtractor& extractor,
                          GeoResolver& resolver, unsigned jobs = 1);

void write_resolved_jsonl(std::ostream& out, std::span<const ResolvedCandidate> resolved);
std::vector<ResolvedCandidate> read_resolved_jsonl(std::istream& in, const CountryRegistry& registry);

}  // namespace covaud
