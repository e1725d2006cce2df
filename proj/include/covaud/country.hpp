#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "covaud/phrase.hpp"

namespace covaud {

enum class Continent { Asia, NorthAmerica, Africa, Europe, SouthAmerica, Oceania };

inline constexpr Continent kAllContinents[] = {Continent::Asia,   Continent::NorthAmerica,
                                               Continent::Africa, Continent::Europe,
                                               Continent::SouthAmerica, Continent::Oceania};

std::string_view to_string(Continent c);
/// Accepts the enum spelling ("NorthAmerica") or the display form ("North America").
std::optional<Continent> parse_continent(std::string_view s);
std::string_view display_name(Continent c);

struct CountryCode {
  std::string iso3;
  std::string display_name;
  Continent continent = Continent::Asia;

  friend bool operator==(const CountryCode& a, const CountryCode& b) { return a.iso3 == b.iso3; }
  friend bool operator<(const CountryCode& a, const CountryCode& b) { return a.iso3 < b.iso3; }
};

/// A country name found in running text.
struct CountryMention {
  CountryCode country;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Immutable table of countries and the aliases that resolve to them.
///
/// Registry TSV columns: iso3, iso2, display_name, continent.
/// Alias TSV columns: alias, iso3. Display names and ISO3 codes are implicit
/// aliases. Lookups ignore case and punctuation.
class CountryRegistry {
 public:
  static CountryRegistry load(const std::filesystem::path& registry_tsv,
                              const std::filesystem::path& alias_tsv);
  /// Loads countries.tsv and country_aliases.tsv from a data directory.
  static CountryRegistry load_dir(const std::filesystem::path& dir);
  static CountryRegistry from_streams(std::istream& registry_tsv, std::istream& alias_tsv);

  /// Alias lookup. Unknown names return nullopt, they are never guessed.
  [[nodiscard]] std::optional<CountryCode> normalize(std::string_view name_raw) const;
  [[nodiscard]] const CountryCode* by_iso3(std::string_view iso3) const;
  [[nodiscard]] const CountryCode* by_iso2(std::string_view iso2) const;

  /// Country names and demonyms in `text`, left to right, longest match
  /// first. Short all-caps aliases ("US", "UK") must match case exactly.
  [[nodiscard]] std::vector<CountryMention> mentions(std::string_view text) const;

  [[nodiscard]] const std::vector<CountryCode>& countries() const { return countries_; }

 private:
  struct Alias {
    std::size_t country = 0;
    std::string spelling;
    bool scannable = true;
  };

  void add_alias(std::string_view alias, std::size_t country, bool scannable);

  std::vector<CountryCode> countries_;
  std::map<std::string, std::size_t, std::less<>> by_iso3_;
  std::map<std::string, std::size_t, std::less<>> by_iso2_;
  PhraseTable<Alias> aliases_;
};

}  // namespace covaud
