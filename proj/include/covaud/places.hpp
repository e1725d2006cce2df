#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "covaud/corpus.hpp"
#include "covaud/country.hpp"
#include "covaud/dates.hpp"
#include "covaud/phrase.hpp"

namespace covaud {

enum class ResolverStage { Gazetteer, RemoteGeocoder, ContextInference, Unresolved };

std::string_view to_string(ResolverStage s);
std::optional<ResolverStage> parse_resolver_stage(std::string_view s);

struct PlaceMention {
  std::string raw_span;
  std::optional<CountryCode> resolved;
  ResolverStage resolver_stage = ResolverStage::Unresolved;

  friend bool operator==(const PlaceMention& a, const PlaceMention& b) {
    return a.raw_span == b.raw_span && a.resolver_stage == b.resolver_stage &&
           a.resolved.has_value() == b.resolved.has_value() &&
           (!a.resolved || a.resolved->iso3 == b.resolved->iso3);
  }
};

nlohmann::json to_json(const PlaceMention& p);

struct GazetteerEntry {
  std::string placename;
  std::string iso3;  // empty for regions that span countries
  double importance = 0.0;
};

/// Known placenames. TSV columns: placename, iso3, importance.
class Gazetteer {
 public:
  static Gazetteer load(const std::filesystem::path& tsv);
  static Gazetteer from_stream(std::istream& tsv);

  void add(GazetteerEntry entry);
  /// Case- and punctuation-insensitive exact lookup; all rows with that name.
  [[nodiscard]] std::vector<GazetteerEntry> lookup(std::string_view placename) const;
  [[nodiscard]] const PhraseTable<std::vector<GazetteerEntry>>& phrases() const { return phrases_; }
  [[nodiscard]] std::size_t size() const { return phrases_.size(); }

 private:
  PhraseTable<std::vector<GazetteerEntry>> phrases_;
};

/// Finds placename spans in text. Implementations must be thread-safe.
class PlacenameExtractor {
 public:
  virtual ~PlacenameExtractor() = default;
  [[nodiscard]] virtual std::vector<std::string> extract(std::string_view text) const = 0;
};

/// Longest gazetteer match over capitalized token spans.
class GazetteerExtractor final : public PlacenameExtractor {
 public:
  explicit GazetteerExtractor(const Gazetteer& gazetteer) : gazetteer_(gazetteer) {}
  [[nodiscard]] std::vector<std::string> extract(std::string_view text) const override;

 private:
  const Gazetteer& gazetteer_;
};

/// Unresolved mentions for each distinct span, in order of first appearance.
std::vector<PlaceMention> extract_placenames(std::string_view text, const PlacenameExtractor& extractor);

enum class DateOrigin { Sentence, Title };

std::string_view to_string(DateOrigin o);

/// One (country, date) reading of a candidate sentence.
struct ResolvedCandidate {
  CandidateSentence candidate;
  CountryCode country;
  PlaceMention place;  // how the country was found
  DateMention date;
  DateOrigin date_origin = DateOrigin::Sentence;
};

nlohmann::json to_json(const ResolvedCandidate& r);
/// Throws ParseError on schema violations or an unknown iso3.
ResolvedCandidate resolved_candidate_from_json(const nlohmann::json& j, const CountryRegistry& registry);

/// A date mention with the text it was found in.
struct LocatedDate {
  DateMention date;
  DateOrigin origin = DateOrigin::Sentence;
};

/// Cartesian product of distinct resolved countries and resolved dates.
/// Empty when either side has nothing resolved; the candidate is then
/// discarded.
std::vector<ResolvedCandidate> expand_candidates(const CandidateSentence& candidate,
                                                 std::span<const LocatedDate> dates,
                                                 std::span<const PlaceMention> places);

}  // namespace covaud
