#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace covaud::csv {

/// RFC 4180 style reader: quoted fields may contain separators, doubled
/// quotes and newlines.
class Reader {
 public:
  explicit Reader(std::istream& in, char sep = ',') : in_(in), sep_(sep) {}

  /// Next record, or nullopt at end of input. Throws ParseError on an
  /// unterminated quoted field.
  std::optional<std::vector<std::string>> next();

  /// Physical line on which the last returned record started (1-based).
  [[nodiscard]] std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  char sep_;
  std::size_t current_line_ = 0;
  std::size_t record_line_ = 0;
};

/// Column-name lookup over a header row.
class Header {
 public:
  Header() = default;
  explicit Header(const std::vector<std::string>& names);

  /// Throws ParseError listing every missing column.
  void require(const std::vector<std::string_view>& names) const;
  [[nodiscard]] bool has(std::string_view name) const;
  /// Empty string when the row is short or the column is absent.
  [[nodiscard]] std::string get(const std::vector<std::string>& row, std::string_view name) const;

 private:
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Quotes a field when it contains the separator, a quote or a newline.
std::string escape(std::string_view field, char sep = ',');

}  // namespace covaud::csv
