#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qna::text {

/// A word token with its byte range [begin, end) in the source string.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Token&) const = default;
};

/// Decodes one UTF-8 code point at `pos`. Invalid bytes decode as themselves
/// with length 1 so that every input makes progress.
struct CodePoint {
  std::uint32_t value;
  std::size_t length;
};
CodePoint decode_utf8(std::string_view s, std::size_t pos);
void append_utf8(std::string& out, std::uint32_t cp);

/// Whitespace as understood by Python's str.split().
bool is_unicode_space(std::uint32_t cp);
/// Approximation of Python's \w for code points (letters, digits, underscore).
bool is_word_char(std::uint32_t cp);
bool is_ascii_punct(std::uint32_t cp);

/// Lowercases ASCII, Latin-1, Latin Extended-A, basic Greek and Cyrillic.
std::string to_lower(std::string_view s);
std::uint32_t to_lower(std::uint32_t cp);

/// Splits on runs of Unicode whitespace, dropping empty fields.
std::vector<std::string> split_whitespace(std::string_view s);

/// Whitespace-plus-punctuation tokenizer: maximal runs of word characters
/// form one token, every other non-space code point is its own token. Invalid
/// UTF-8 bytes count as word characters.
std::vector<Token> tokenize_words(std::string_view s);

std::vector<std::string> token_strings(const std::vector<Token>& tokens);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Removes every whitespace code point; used for whitespace-insensitive comparison.
std::string strip_all_space(std::string_view s);

std::string trim(std::string_view s);

}  // namespace qna::text
