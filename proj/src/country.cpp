#include "covaud/country.hpp"

#include <fstream>

#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud {

namespace {

constexpr std::pair<Continent, std::string_view> kContinentNames[] = {
    {Continent::Asia, "Asia"},           {Continent::NorthAmerica, "NorthAmerica"},
    {Continent::Africa, "Africa"},       {Continent::Europe, "Europe"},
    {Continent::SouthAmerica, "SouthAmerica"}, {Continent::Oceania, "Oceania"},
};

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

// TSV rows with a header line; '#' starts a comment line.
template <typename Fn>
void for_each_tsv_row(std::istream& in, std::string_view what, Fn fn) {
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    fn(text::split(line, '\t'), lineno);
  }
  if (!header_seen) throw ParseError(std::string(what) + ": missing header row");
}

bool is_short_caps(std::string_view s) {
  if (s.size() > 5) return false;
  for (char c : s) {
    if (text::is_ascii_alpha(c) && !text::is_ascii_upper(c)) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Continent c) {
  for (const auto& [value, name] : kContinentNames) {
    if (value == c) return name;
  }
  return "Unknown";
}

std::string_view display_name(Continent c) {
  switch (c) {
    case Continent::NorthAmerica: return "North America";
    case Continent::SouthAmerica: return "South America";
    default: return to_string(c);
  }
}

std::optional<Continent> parse_continent(std::string_view s) {
  const auto key = text::normalize_key(s);
  for (const auto& [value, name] : kContinentNames) {
    if (text::normalize_key(name) == key || text::normalize_key(display_name(value)) == key) {
      return value;
    }
  }
  return std::nullopt;
}

CountryRegistry CountryRegistry::load(const std::filesystem::path& registry_tsv,
                                      const std::filesystem::path& alias_tsv) {
  auto reg = open_or_throw(registry_tsv);
  auto alias = open_or_throw(alias_tsv);
  return from_streams(reg, alias);
}

CountryRegistry CountryRegistry::load_dir(const std::filesystem::path& dir) {
  return load(dir / "countries.tsv", dir / "country_aliases.tsv");
}

CountryRegistry CountryRegistry::from_streams(std::istream& registry_tsv, std::istream& alias_tsv) {
  CountryRegistry reg;
  for_each_tsv_row(registry_tsv, "country registry", [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() < 4) {
      throw ParseError("country registry line " + std::to_string(line) + ": expected 4 columns");
    }
    const auto continent = parse_continent(f[3]);
    if (!continent) {
      throw ParseError("country registry line " + std::to_string(line) + ": unknown continent '" + f[3] + "'");
    }
    const auto iso3 = text::trim(f[0]);
    if (iso3.size() != 3) {
      throw ParseError("country registry line " + std::to_string(line) + ": bad iso3 '" + iso3 + "'");
    }
    if (reg.by_iso3_.count(iso3) != 0) {
      throw ParseError("country registry line " + std::to_string(line) + ": duplicate iso3 " + iso3);
    }
    const auto idx = reg.countries_.size();
    reg.countries_.push_back({iso3, text::trim(f[2]), *continent});
    reg.by_iso3_.emplace(iso3, idx);
    if (!text::trim(f[1]).empty()) reg.by_iso2_.emplace(text::trim(f[1]), idx);
  });
  for (std::size_t i = 0; i < reg.countries_.size(); ++i) {
    reg.add_alias(reg.countries_[i].display_name, i, true);
    reg.add_alias(reg.countries_[i].iso3, i, false);
  }
  for_each_tsv_row(alias_tsv, "country aliases", [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() < 2) {
      throw ParseError("country aliases line " + std::to_string(line) + ": expected 2 columns");
    }
    const auto it = reg.by_iso3_.find(text::trim(f[1]));
    if (it == reg.by_iso3_.end()) {
      throw ParseError("country aliases line " + std::to_string(line) + ": unknown iso3 '" + f[1] + "'");
    }
    reg.add_alias(text::trim(f[0]), it->second, true);
  });
  return reg;
}

void CountryRegistry::add_alias(std::string_view alias, std::size_t country, bool scannable) {
  aliases_.add(alias, Alias{country, std::string(alias), scannable});
}

std::optional<CountryCode> CountryRegistry::normalize(std::string_view name_raw) const {
  const auto* alias = aliases_.find(name_raw);
  if (alias == nullptr) return std::nullopt;
  return countries_[alias->country];
}

const CountryCode* CountryRegistry::by_iso3(std::string_view iso3) const {
  const auto it = by_iso3_.find(iso3);
  return it == by_iso3_.end() ? nullptr : &countries_[it->second];
}

const CountryCode* CountryRegistry::by_iso2(std::string_view iso2) const {
  std::string upper(iso2);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  const auto it = by_iso2_.find(upper);
  return it == by_iso2_.end() ? nullptr : &countries_[it->second];
}

std::vector<CountryMention> CountryRegistry::mentions(std::string_view source) const {
  std::vector<CountryMention> out;
  const auto hits = aliases_.scan(source, [](const Alias& a, std::string_view span) {
    if (!a.scannable) return false;
    if (is_short_caps(a.spelling)) {
      // "US" must not match the pronoun "Us" at a sentence start
      std::string compact;
      for (char c : span) {
        if (text::is_word_char(c)) compact.push_back(c);
      }
      std::string want;
      for (char c : a.spelling) {
        if (text::is_word_char(c)) want.push_back(c);
      }
      return compact == want;
    }
    return true;
  });
  out.reserve(hits.size());
  for (const auto& h : hits) {
    out.push_back({countries_[aliases_.payload(h.entry).country], h.begin, h.end});
  }
  return out;
}

}  // namespace covaud
