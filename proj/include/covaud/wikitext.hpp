#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace covaud {

/// A citation URL anchored at a character offset of a paragraph.
struct Citation {
  std::size_t paragraph = 0;
  std::size_t offset = 0;
  std::string url;

  friend bool operator==(const Citation&, const Citation&) = default;
};

struct PlainText {
  std::vector<std::string> paragraphs;
  std::vector<Citation> citations;
};

/// Heuristic wikitext to plain text conversion. Templates, tables, comments,
/// files and categories are dropped; links keep their display text;
/// <ref> contents are removed and their URLs recorded at the position the
/// reference occupied. Paragraphs split on blank lines, headings and list items.
PlainText strip_wikitext(std::string_view wikitext);

/// All http(s) URLs appearing in a fragment of markup.
std::vector<std::string> harvest_urls(std::string_view fragment);

}  // namespace covaud
