#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "covaud/text.hpp"

namespace covaud {

/// A span of source text matched against a phrase table.
struct PhraseHit {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t entry = 0;  // index into the table's payloads
};

/// Longest-match lookup of multi-word phrases in running text. Keys are
/// compared after text::normalize_key; a match must start on a capitalized
/// token and may only cross whitespace, hyphens, periods or apostrophes.
template <typename Payload>
class PhraseTable {
 public:
  void add(std::string_view phrase, Payload payload) {
    auto key = text::normalize_key(phrase);
    if (key.empty()) return;
    std::size_t words = 1;
    for (char c : key) words += (c == ' ') ? 1 : 0;
    max_words_ = std::max(max_words_, words + 2);  // "U.S.A." spans three tokens
    const auto [it, inserted] = index_.emplace(std::move(key), payloads_.size());
    if (inserted) {
      payloads_.push_back(std::move(payload));
    }
  }

  /// Payload stored under `phrase`, inserting `init` first when absent.
  /// Null when the phrase normalizes to nothing.
  Payload* find_or_add(std::string_view phrase, Payload init) {
    const auto key = text::normalize_key(phrase);
    if (key.empty()) return nullptr;
    if (const auto it = index_.find(key); it != index_.end()) return &payloads_[it->second];
    add(phrase, std::move(init));
    return &payloads_.back();
  }

  [[nodiscard]] const Payload* find(std::string_view phrase) const {
    const auto it = index_.find(text::normalize_key(phrase));
    return it == index_.end() ? nullptr : &payloads_[it->second];
  }

  [[nodiscard]] const Payload& payload(std::size_t entry) const { return payloads_[entry]; }
  [[nodiscard]] std::size_t size() const { return payloads_.size(); }

  /// Non-overlapping hits, left to right; at each start the longest phrase wins.
  /// `accept` can veto a candidate hit given (payload, matched source text).
  template <typename Accept>
  [[nodiscard]] std::vector<PhraseHit> scan(std::string_view source, Accept accept) const {
    std::vector<PhraseHit> hits;
    const auto tokens = text::word_tokens(source);
    std::size_t i = 0;
    while (i < tokens.size()) {
      if (!text::is_ascii_upper(tokens[i].text.front()) &&
          static_cast<unsigned char>(tokens[i].text.front()) < 0x80) {
        ++i;
        continue;
      }
      std::size_t last = i;
      while (last + 1 < tokens.size() && last + 1 - i < max_words_ &&
             joinable(source, tokens[last].end, tokens[last + 1].begin)) {
        ++last;
      }
      bool matched = false;
      for (std::size_t j = last + 1; j-- > i;) {
        // a phrase never ends on a dangling separator, so test token spans only
        const auto span = source.substr(tokens[i].begin, tokens[j].end - tokens[i].begin);
        const auto it = index_.find(text::normalize_key(span));
        if (it != index_.end() && accept(payloads_[it->second], span)) {
          hits.push_back({tokens[i].begin, tokens[j].end, it->second});
          i = j + 1;
          matched = true;
          break;
        }
      }
      if (!matched) ++i;
    }
    return hits;
  }

  [[nodiscard]] std::vector<PhraseHit> scan(std::string_view source) const {
    return scan(source, [](const Payload&, std::string_view) { return true; });
  }

 private:
  static bool joinable(std::string_view s, std::size_t from, std::size_t to) {
    if (to <= from) return false;
    for (std::size_t k = from; k < to; ++k) {
      const char c = s[k];
      if (c != ' ' && c != '-' && c != '.' && c != '\'') return false;
    }
    return true;
  }

  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Payload> payloads_;
  std::size_t max_words_ = 1;
};

}  // namespace covaud
