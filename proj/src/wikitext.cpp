#include "covaud/wikitext.hpp"

#include <algorithm>
#include <array>
#include <cstring>

#include "covaud/text.hpp"

namespace covaud {

namespace {

bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > s.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    char a = s[pos + k];
    if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
    if (a != prefix[k]) return false;
  }
  return true;
}

// Index just past the "close" that balances the "open" at `pos`.
std::size_t skip_balanced(std::string_view s, std::size_t pos, std::string_view open, std::string_view close) {
  int depth = 0;
  std::size_t i = pos;
  while (i < s.size()) {
    if (s.compare(i, open.size(), open) == 0) {
      ++depth;
      i += open.size();
    } else if (s.compare(i, close.size(), close) == 0) {
      --depth;
      i += close.size();
      if (depth == 0) return i;
    } else {
      ++i;
    }
  }
  return s.size();
}

std::size_t find_ci(std::string_view s, std::size_t from, std::string_view needle) {
  for (std::size_t i = from; i + needle.size() <= s.size(); ++i) {
    if (starts_with_ci(s, i, needle)) return i;
  }
  return std::string_view::npos;
}

constexpr std::array<std::string_view, 4> kDroppedLinkNamespaces = {"file", "image", "category", "media"};
constexpr std::array<std::string_view, 9> kDroppedContentTags = {
    "math", "gallery", "timeline", "score", "syntaxhighlight", "source", "templatedata", "imagemap", "hiero"};

bool dropped_link_target(std::string_view target) {
  const auto colon = target.find(':');
  if (colon == std::string_view::npos || colon == 0) return false;
  const auto prefix = text::to_lower(text::trim(target.substr(0, colon)));
  if (std::find(kDroppedLinkNamespaces.begin(), kDroppedLinkNamespaces.end(), prefix) !=
      kDroppedLinkNamespaces.end()) {
    return true;
  }
  // interlanguage links: [[de:Hochwasser]]
  return prefix.size() >= 2 && prefix.size() <= 3 &&
         std::all_of(prefix.begin(), prefix.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

struct Entity {
  std::string_view name;
  std::string_view value;
};

constexpr Entity kEntities[] = {{"&nbsp;", " "},  {"&ndash;", "\xE2\x80\x93"}, {"&mdash;", "\xE2\x80\x94"},
                                {"&amp;", "&"},   {"&quot;", "\""},            {"&lt;", "<"},
                                {"&gt;", ">"},    {"&apos;", "'"}};

class Stripper {
 public:
  struct RawCitation {
    std::size_t offset;
    std::string url;
  };

  explicit Stripper(bool block_mode) : block_mode_(block_mode) {}

  void run(std::string_view s) {
    std::size_t i = 0;
    bool list_line = false;
    while (i < s.size()) {
      const bool line_start = (i == 0 || s[i - 1] == '\n');
      if (block_mode_ && line_start) {
        if (s.compare(i, 2, "{|") == 0) {
          i = skip_table(s, i);
          out_ += "\n\n";
          continue;
        }
        if (s[i] == '=') {
          const auto eol = std::min(s.find('\n', i), s.size());
          const auto line = text::trim(s.substr(i, eol - i));
          if (line.size() >= 2 && line.back() == '=') {
            out_ += "\n\n";
            i = eol;
            continue;
          }
        }
        if (s[i] == '*' || s[i] == '#' || s[i] == ':' || s[i] == ';') {
          while (i < s.size() && (s[i] == '*' || s[i] == '#' || s[i] == ':' || s[i] == ';')) ++i;
          out_ += "\n\n";
          list_line = true;
          continue;
        }
      }
      const char c = s[i];
      if (c == '\n') {
        out_ += list_line ? "\n\n" : "\n";
        list_line = false;
        ++i;
        continue;
      }
      if (c == '<' && s.compare(i, 4, "<!--") == 0) {
        const auto end = s.find("-->", i + 4);
        i = (end == std::string_view::npos) ? s.size() : end + 3;
        continue;
      }
      if (c == '{' && s.compare(i, 2, "{{") == 0) {
        i = skip_balanced(s, i, "{{", "}}");
        continue;
      }
      if (c == '<' && starts_with_ci(s, i, "<ref") && i + 4 < s.size() &&
          (s[i + 4] == '>' || s[i + 4] == ' ' || s[i + 4] == '/')) {
        i = take_reference(s, i);
        continue;
      }
      if (c == '<' && i + 1 < s.size() && (text::is_ascii_alpha(s[i + 1]) || s[i + 1] == '/')) {
        i = skip_tag(s, i);
        continue;
      }
      if (c == '[' && s.compare(i, 2, "[[") == 0) {
        i = take_wikilink(s, i);
        continue;
      }
      if (c == '[' && (starts_with_ci(s, i + 1, "http://") || starts_with_ci(s, i + 1, "https://") ||
                       s.compare(i + 1, 2, "//") == 0)) {
        i = take_external_link(s, i);
        continue;
      }
      if (c == '\'' && s.compare(i, 2, "''") == 0) {
        while (i < s.size() && s[i] == '\'') ++i;
        continue;
      }
      if (c == '_' && s.compare(i, 2, "__") == 0) {
        std::size_t j = i + 2;
        while (j < s.size() && text::is_ascii_upper(s[j])) ++j;
        if (j > i + 2 && s.compare(j, 2, "__") == 0) {
          i = j + 2;
          continue;
        }
      }
      if (c == '&') {
        bool replaced = false;
        for (const auto& e : kEntities) {
          if (s.compare(i, e.name.size(), e.name) == 0) {
            out_ += e.value;
            i += e.name.size();
            replaced = true;
            break;
          }
        }
        if (replaced) continue;
      }
      out_.push_back(c);
      ++i;
    }
  }

  std::string& out() { return out_; }
  std::vector<RawCitation>& citations() { return citations_; }

 private:
  static std::size_t skip_table(std::string_view s, std::size_t i) {
    int depth = 0;
    while (i < s.size()) {
      const auto eol = std::min(s.find('\n', i), s.size());
      const auto line = text::trim(s.substr(i, eol - i));
      if (line.rfind("{|", 0) == 0) ++depth;
      if (line.rfind("|}", 0) == 0 && --depth == 0) return std::min(eol + 1, s.size());
      i = eol + 1;
    }
    return s.size();
  }

  static std::size_t skip_tag(std::string_view s, std::size_t i) {
    const auto close = s.find('>', i);
    if (close == std::string_view::npos) return s.size();
    std::size_t name_end = i + 1;
    while (name_end < close && text::is_ascii_alpha(s[name_end])) ++name_end;
    const auto name = text::to_lower(s.substr(i + 1, name_end - i - 1));
    const bool self_closing = s[close - 1] == '/';
    if (!self_closing && std::find(kDroppedContentTags.begin(), kDroppedContentTags.end(), name) !=
                             kDroppedContentTags.end()) {
      const auto end = find_ci(s, close, "</" + name);
      if (end == std::string_view::npos) return s.size();
      const auto end_close = s.find('>', end);
      return end_close == std::string_view::npos ? s.size() : end_close + 1;
    }
    return close + 1;
  }

  std::size_t take_reference(std::string_view s, std::size_t i) {
    const auto close = s.find('>', i);
    if (close == std::string_view::npos) return s.size();
    if (s[close - 1] == '/') return close + 1;  // <ref name="x" /> reuses an earlier citation
    const auto end = find_ci(s, close + 1, "</ref");
    const auto content = s.substr(close + 1, (end == std::string_view::npos ? s.size() : end) - close - 1);
    for (auto& url : harvest_urls(content)) citations_.push_back({out_.size(), std::move(url)});
    if (end == std::string_view::npos) return s.size();
    const auto end_close = s.find('>', end);
    return end_close == std::string_view::npos ? s.size() : end_close + 1;
  }

  std::size_t take_wikilink(std::string_view s, std::size_t i) {
    const auto end = skip_balanced(s, i, "[[", "]]");
    const auto inner = s.substr(i + 2, end >= i + 4 ? end - i - 4 : 0);
    const auto pipe = inner.find('|');
    const auto target = inner.substr(0, pipe);
    if (dropped_link_target(target)) return end;
    std::string_view display = inner;
    if (pipe != std::string_view::npos) {
      display = inner.substr(inner.rfind('|') + 1);
      if (text::trim(display).empty()) display = target;
    }
    if (!display.empty() && display.front() == ':') display.remove_prefix(1);
    Stripper nested(false);
    nested.run(display);
    out_ += nested.out();
    return end;
  }

  std::size_t take_external_link(std::string_view s, std::size_t i) {
    const auto close = s.find(']', i);
    const auto end = close == std::string_view::npos ? s.size() : close;
    const auto inner = s.substr(i + 1, end - i - 1);
    const auto space = inner.find(' ');
    const auto url = inner.substr(0, space);
    citations_.push_back({out_.size(), std::string(url)});
    if (space != std::string_view::npos) {
      Stripper nested(false);
      nested.run(inner.substr(space + 1));
      out_ += nested.out();
    }
    return close == std::string_view::npos ? s.size() : close + 1;
  }

  bool block_mode_;
  std::string out_;
  std::vector<RawCitation> citations_;
};

}  // namespace

std::vector<std::string> harvest_urls(std::string_view fragment) {
  std::vector<std::string> urls;
  std::size_t i = 0;
  while (i < fragment.size()) {
    const auto http = find_ci(fragment, i, "http");
    if (http == std::string_view::npos) break;
    std::size_t j = http + 4;
    if (j < fragment.size() && (fragment[j] == 's' || fragment[j] == 'S')) ++j;
    if (fragment.compare(j, 3, "://") != 0) {
      i = http + 4;
      continue;
    }
    std::size_t end = j + 3;
    while (end < fragment.size()) {
      const char c = fragment[end];
      if (text::is_space(c) || c == '|' || c == ']' || c == '}' || c == '<' || c == '"' || c == '[') break;
      ++end;
    }
    i = end;
    // sentence punctuation after a bare URL
    while (end > j + 3 && std::string_view(".,;:!?").find(fragment[end - 1]) != std::string_view::npos) --end;
    if (end > j + 3) urls.emplace_back(fragment.substr(http, end - http));
  }
  return urls;
}

PlainText strip_wikitext(std::string_view wikitext) {
  Stripper stripper(true);
  stripper.run(wikitext);
  const std::string& raw = stripper.out();
  auto& raw_cites = stripper.citations();

  PlainText result;
  std::string current;
  std::size_t newline_run = 0;
  bool pending_space = false;
  std::size_t next_cite = 0;

  auto place_citations = [&](std::size_t raw_offset) {
    while (next_cite < raw_cites.size() && raw_cites[next_cite].offset <= raw_offset) {
      // attach to the open paragraph, or to the end of the previous one
      if (!current.empty()) {
        result.citations.push_back({result.paragraphs.size(), current.size(), raw_cites[next_cite].url});
      } else if (!result.paragraphs.empty()) {
        result.citations.push_back(
            {result.paragraphs.size() - 1, result.paragraphs.back().size(), raw_cites[next_cite].url});
      } else {
        result.citations.push_back({0, 0, raw_cites[next_cite].url});
      }
      ++next_cite;
    }
  };
  auto flush = [&] {
    if (!current.empty()) result.paragraphs.push_back(std::move(current));
    current.clear();
  };

  for (std::size_t k = 0; k < raw.size(); ++k) {
    place_citations(k);
    const char c = raw[k];
    if (c == '\n') {
      ++newline_run;
      pending_space = true;
      continue;
    }
    if (text::is_space(c)) {
      pending_space = true;
      continue;
    }
    if (newline_run >= 2) {
      flush();
    } else if (pending_space && !current.empty()) {
      current.push_back(' ');
    }
    newline_run = 0;
    pending_space = false;
    current.push_back(c);
  }
  place_citations(raw.size());
  flush();
  // a citation before any text has no paragraph to live in
  std::erase_if(result.citations, [&](const Citation& c) { return c.paragraph >= result.paragraphs.size(); });
  return result;
}

}  // namespace covaud
