#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace covaud::text {

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string trim(std::string_view s);
std::string_view trim_view(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

/// Lower-cases ASCII letters, drops punctuation, and collapses whitespace.
/// "U.S.A." and "usa" both become "usa"; "Côte d'Ivoire" keeps its UTF-8 bytes.
std::string normalize_key(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

inline bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_ascii_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

/// Letters, digits and any non-ASCII byte count as word characters, so
/// accented names stay in one token.
inline bool is_word_char(char c) {
  return is_ascii_alpha(c) || is_ascii_digit(c) || static_cast<unsigned char>(c) >= 0x80;
}

/// A maximal run of word characters with its byte offsets in the source.
struct Token {
  std::string_view text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Bytes at `i` that separate words: 0 inside a word, otherwise the length
/// of the separator (UTF-8 dashes, curly quotes and NBSP span several bytes).
std::size_t separator_length(std::string_view s, std::size_t i);

std::vector<Token> word_tokens(std::string_view s);

/// True when everything between two offsets is whitespace.
bool only_space_between(std::string_view s, std::size_t from, std::size_t to);

}  // namespace covaud::text
