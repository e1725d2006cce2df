#include "covaud/csv.hpp"

#include <string>

#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud::csv {

std::optional<std::vector<std::string>> Reader::next() {
  std::string line;
  // skip blank lines between records
  while (true) {
    if (!std::getline(in_, line)) return std::nullopt;
    ++current_line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (current_line_ == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (!line.empty()) break;
  }
  record_line_ = current_line_;

  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  std::size_t i = 0;
  while (true) {
    if (i == line.size()) {
      if (!in_quotes) break;
      // quoted field spans a newline
      std::string more;
      if (!std::getline(in_, more)) {
        throw ParseError("unterminated quoted field starting on line " + std::to_string(record_line_));
      }
      ++current_line_;
      if (!more.empty() && more.back() == '\r') more.pop_back();
      field.push_back('\n');
      line = std::move(more);
      i = 0;
      continue;
    }
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      in_quotes = true;
    } else if (c == sep_) {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
    ++i;
  }
  fields.push_back(std::move(field));
  return fields;
}

Header::Header(const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    index_.emplace(text::to_lower(text::trim(names[i])), i);
  }
}

void Header::require(const std::vector<std::string_view>& names) const {
  std::string missing;
  for (auto name : names) {
    if (!has(name)) {
      if (!missing.empty()) missing += ", ";
      missing += name;
    }
  }
  if (!missing.empty()) {
    throw ParseError("missing required column(s): " + missing);
  }
}

bool Header::has(std::string_view name) const { return index_.find(name) != index_.end(); }

std::string Header::get(const std::vector<std::string>& row, std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end() || it->second >= row.size()) return {};
  return text::trim(row[it->second]);
}

std::string escape(std::string_view field, char sep) {
  if (field.find_first_of(std::string{sep, '"', '\n', '\r'}) == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace covaud::csv
