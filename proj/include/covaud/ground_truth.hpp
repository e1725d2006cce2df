#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "covaud/country.hpp"
#include "covaud/date.hpp"

namespace covaud {

enum class Source : std::uint8_t { Floodlist = 0, Emdat = 1, Dfo = 2 };

inline constexpr Source kAllSources[] = {Source::Floodlist, Source::Emdat, Source::Dfo};

std::string_view to_string(Source s);
std::optional<Source> parse_source(std::string_view s);

/// One flood entry as reported by a single source database.
struct SourceRecord {
  Source source = Source::Floodlist;
  std::string country_raw;
  Date start_date;
  std::optional<Date> end_date;
  std::optional<std::int64_t> fatalities;
  std::optional<std::string> affected;
  std::vector<std::string> locations;
  std::string native_id;
  std::string disaster_type;
};

struct SourceRef {
  Source source = Source::Floodlist;
  std::string id;

  friend auto operator<=>(const SourceRef&, const SourceRef&) = default;
};

struct FatalityReport {
  SourceRef member;
  std::int64_t value = 0;

  friend bool operator==(const FatalityReport&, const FatalityReport&) = default;
};

/// A merged country-level event.
struct ConsolidatedEvent {
  std::string event_id;
  CountryCode country;
  Date start_date;
  Date end_date;
  std::optional<std::int64_t> fatalities;
  std::optional<std::string> affected;
  std::map<Source, std::vector<std::string>> locations_by_source;
  std::vector<SourceRef> native_ids;
  std::string disaster_type;
  bool in_emdat = false;
  bool in_dartmouth = false;
  bool in_floodlist = false;
  /// Every member value that fed `fatalities`.
  std::vector<FatalityReport> fatalities_provenance;

  [[nodiscard]] int source_count() const {
    return static_cast<int>(in_emdat) + static_cast<int>(in_dartmouth) + static_cast<int>(in_floodlist);
  }
  [[nodiscard]] bool has_source(Source s) const;
};

bool operator==(const ConsolidatedEvent& a, const ConsolidatedEvent& b);

/// Row-level problem found while ingesting.
struct RejectEntry {
  std::string file;
  std::size_t line = 0;
  std::string reason;
};

struct ParseResult {
  std::vector<SourceRecord> records;
  std::vector<RejectEntry> rejects;
  /// Rows dropped by the per-source inclusion rules (not errors).
  std::size_t excluded = 0;
};

/// Parses one per-source CSV. Throws ParseError when the header is missing
/// required columns; bad rows go to `rejects` with their line number.
ParseResult parse_source_records(std::istream& in, Source source, std::string_view file_label = "");
/// Throws IoError when the file cannot be opened.
ParseResult parse_source_file(const std::filesystem::path& path, Source source);

std::optional<CountryCode> normalize_country(const CountryRegistry& registry, std::string_view name_raw);

/// Fills a missing end date with start + 3 days.
SourceRecord impute_end_date(SourceRecord record);

/// A source record with a resolved country and a concrete end date.
struct NormalizedRecord {
  SourceRecord record;
  CountryCode country;
};

struct PreparedRecords {
  std::vector<NormalizedRecord> records;
  std::vector<RejectEntry> rejects;  // unresolved countries
};

/// Normalizes countries and imputes end dates; unresolved countries are
/// reported and left out.
PreparedRecords prepare_records(std::span<const SourceRecord> records, const CountryRegistry& registry);

/// Merges records of the same country whose date ranges overlap (inclusive),
/// transitively. Output ordered by (iso3, start_date, event_id).
/// Throws std::invalid_argument if a record has no end date.
std::vector<ConsolidatedEvent> consolidate(std::span<const NormalizedRecord> records);

/// Events confirmed by at least two sources.
std::vector<ConsolidatedEvent> filter_multi_source(std::span<const ConsolidatedEvent> events);

/// Counts per non-empty source subset, indexed by bitmask
/// (bit 0 Floodlist, bit 1 EM-DAT, bit 2 DFO). Index 0 is always zero.
using VennCounts = std::array<std::size_t, 8>;

VennCounts venn_counts(std::span<const ConsolidatedEvent> events);
unsigned source_mask(const ConsolidatedEvent& e);
/// "floodlist+emdat" style label for a subset mask.
std::string venn_label(unsigned mask);
nlohmann::json venn_to_json(const VennCounts& counts);

nlohmann::json to_json(const ConsolidatedEvent& e);
/// Throws ParseError on schema violations or an unknown iso3.
ConsolidatedEvent event_from_json(const nlohmann::json& j, const CountryRegistry& registry);

void write_events_jsonl(std::ostream& out, std::span<const ConsolidatedEvent> events);
std::vector<ConsolidatedEvent> read_events_jsonl(std::istream& in, const CountryRegistry& registry);

nlohmann::json to_json(const RejectEntry& r);

}  // namespace covaud
