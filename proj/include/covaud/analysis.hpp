#pragma once

#include <cstdint>
#include <filesystem>
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

#include "covaud/corpus.hpp"
#include "covaud/country.hpp"
#include "covaud/ground_truth.hpp"
#include "covaud/matching.hpp"

namespace covaud {

enum class GniGroup { Low, LowerMiddle, UpperMiddle, High };

std::string_view to_string(GniGroup g);
/// Accepts the World Bank labels ("Lower middle income"), their codes
/// (LIC, LMC, UMC, HIC) and short forms ("lower-middle").
std::optional<GniGroup> parse_gni_group(std::string_view s);

struct CountryIndicators {
  std::string iso3;
  std::optional<double> gdp_per_capita;
  std::optional<GniGroup> gni_group;
  std::optional<double> vulnerability;
  std::optional<double> lack_of_coping;
  std::optional<double> english_pct;
  std::optional<std::int64_t> population;
  std::optional<Continent> continent;
};

/// Indicator snapshot. CSV columns: iso3, gdp_per_capita, gni_group,
/// vulnerability, lack_of_coping, english_pct, population, continent. Empty
/// cells mean the value is unknown.
class IndicatorTable {
 public:
  static IndicatorTable load(const std::filesystem::path& csv);
  static IndicatorTable from_stream(std::istream& csv, const std::string& label = "indicators");

  void add(CountryIndicators row);
  [[nodiscard]] const CountryIndicators* find(std::string_view iso3) const;
  [[nodiscard]] std::size_t size() const { return rows_.size(); }

 private:
  std::map<std::string, CountryIndicators, std::less<>> rows_;
};

enum class Axis { Continent, Gdp, Gni, Vulnerability, English, Population, Fatalities, Month, Country };

inline constexpr Axis kAllAxes[] = {Axis::Continent, Axis::Gdp,        Axis::Gni,   Axis::Vulnerability, Axis::English,
                                    Axis::Population, Axis::Fatalities, Axis::Month, Axis::Country};

std::string_view to_string(Axis a);
std::optional<Axis> parse_axis(std::string_view s);
/// Comma-separated axis names. Throws ConfigError on an unknown name.
std::vector<Axis> parse_axes(std::string_view list);

inline constexpr std::string_view kUnknownBucket = "unknown";

std::string gdp_bucket(double gdp);
double combined_vulnerability(double vulnerability, double lack_of_coping);
std::string vulnerability_bucket(double combined);
std::string population_group(std::int64_t population);
std::string fatalities_bucket(std::optional<std::int64_t> fatalities);
std::string english_bucket(double pct);

/// Bucket labels of a fixed-bucket axis in report order; empty for the
/// data-driven axes (month, country).
std::vector<std::string> axis_buckets(Axis axis);

enum class UnknownFatalities { Zero, Exclude };
std::optional<UnknownFatalities> parse_unknown_fatalities(std::string_view s);

struct StratumReport {
  Axis axis = Axis::Continent;
  std::string bucket_label;
  std::size_t ground_truth_count = 0;
  std::size_t matched_count = 0;
  std::optional<double> hit_rate_pct;
};

/// `strata` partition the events whose bucket is known; events routed to
/// "unknown", "2000+" or below the country threshold land in `separate`.
struct AxisReport {
  Axis axis = Axis::Continent;
  std::vector<StratumReport> strata;
  std::vector<StratumReport> separate;
};

struct StratifyOptions {
  std::size_t min_country_events = 5;
  UnknownFatalities unknown_fatalities = UnknownFatalities::Zero;
};

AxisReport stratify(std::span<const ConsolidatedEvent> events, std::span<const MatchResult> matches,
                    const IndicatorTable& indicators, Axis axis, const StratifyOptions& options = {});

nlohmann::json to_json(const StratumReport& s);
nlohmann::json to_json(const AxisReport& r);
void write_axis_csv(std::ostream& out, const AxisReport& report);

/// Host of `url` in lower case without scheme, credentials, port, path and a
/// leading "www.". Nullopt when no plausible host can be found.
std::optional<std::string> registrable_domain(std::string_view url);

struct DomainCounts {
  std::vector<std::pair<std::string, std::size_t>> top;
  std::size_t total_urls = 0;
  std::size_t unparsable = 0;
};

/// Citation domains over the given candidates, by count then name.
DomainCounts extract_reference_domains(std::span<const CandidateSentence> matched, std::size_t top_k = 10);

nlohmann::json to_json(const DomainCounts& d);
void write_domains_csv(std::ostream& out, const DomainCounts& d);

}  // namespace covaud
