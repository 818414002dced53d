#include "qna/text.hpp"

namespace qna::text {

namespace {

// Stray bytes that are not valid UTF-8 are treated as word characters.
bool invalid_byte(const CodePoint& c) { return c.length == 1 && c.value >= 0x80; }

}  // namespace

CodePoint decode_utf8(std::string_view s, std::size_t pos) {
  const auto c = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t i) -> int {
    if (pos + i >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + i]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (c < 0x80) return {c, 1};
  if ((c & 0xE0) == 0xC0) {
    const int b1 = cont(1);
    if (b1 >= 0) return {static_cast<std::uint32_t>(((c & 0x1F) << 6) | b1), 2};
  } else if ((c & 0xF0) == 0xE0) {
    const int b1 = cont(1), b2 = cont(2);
    if (b1 >= 0 && b2 >= 0)
      return {static_cast<std::uint32_t>(((c & 0x0F) << 12) | (b1 << 6) | b2), 3};
  } else if ((c & 0xF8) == 0xF0) {
    const int b1 = cont(1), b2 = cont(2), b3 = cont(3);
    if (b1 >= 0 && b2 >= 0 && b3 >= 0)
      return {static_cast<std::uint32_t>(((c & 0x07) << 18) | (b1 << 12) | (b2 << 6) | b3), 4};
  }
  return {c, 1};
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

bool is_unicode_space(std::uint32_t cp) {
  if (cp == ' ' || (cp >= 0x09 && cp <= 0x0D) || (cp >= 0x1C && cp <= 0x1F)) return true;
  switch (cp) {
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_ascii_punct(std::uint32_t cp) {
  return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
         (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
}

namespace {

// Non-ASCII symbol and punctuation blocks that are not \w in Python.
bool is_unicode_symbol(std::uint32_t cp) {
  if (cp >= 0x80 && cp <= 0xBF) {
    // Latin-1 punctuation/symbols; ª µ º and the superscript digits count as \w.
    return !(cp == 0xAA || cp == 0xB5 || cp == 0xBA || cp == 0xB2 || cp == 0xB3 ||
             cp == 0xB9 || cp == 0xBC || cp == 0xBD || cp == 0xBE);
  }
  if (cp == 0xD7 || cp == 0xF7) return true;
  if (cp >= 0x2010 && cp <= 0x205E) return true;  // general punctuation
  if (cp >= 0x20A0 && cp <= 0x20CF) return true;  // currency
  if (cp >= 0x2190 && cp <= 0x2BFF) return true;  // arrows, math, boxes, misc symbols
  if (cp >= 0x3000 && cp <= 0x303F) return true;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return true;
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return true;  // emoji
  return false;
}

}  // namespace

bool is_word_char(std::uint32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') ||
           cp == '_';
  }
  return !is_unicode_space(cp) && !is_unicode_symbol(cp);
}

std::uint32_t to_lower(std::uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 0x20;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return 'i';
    if (cp == 0x178) return 0xFF;
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E))
      return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto c = decode_utf8(s, i);
    if (c.length == 1 && c.value >= 0x80) {
      out += s[i];  // invalid byte, keep verbatim
    } else {
      append_utf8(out, to_lower(c.value));
    }
    i += c.length;
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = decode_utf8(s, i);
    if (!invalid_byte(c) && is_unicode_space(c.value)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.append(s.substr(i, c.length));
    }
    i += c.length;
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<Token> tokenize_words(std::string_view s) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = decode_utf8(s, i);
    if (!invalid_byte(c) && is_unicode_space(c.value)) {
      i += c.length;
      continue;
    }
    if (invalid_byte(c) || is_word_char(c.value)) {
      const std::size_t start = i;
      while (i < s.size()) {
        const auto d = decode_utf8(s, i);
        if (!invalid_byte(d) && !is_word_char(d.value)) break;
        i += d.length;
      }
      tokens.push_back({std::string(s.substr(start, i - start)), start, i});
    } else {
      tokens.push_back({std::string(s.substr(i, c.length)), i, i + c.length});
      i += c.length;
    }
  }
  return tokens;
}

std::vector<std::string> token_strings(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string strip_all_space(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = decode_utf8(s, i);
    if (invalid_byte(c) || !is_unicode_space(c.value)) out.append(s.substr(i, c.length));
    i += c.length;
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || (s[b] >= '\t' && s[b] <= '\r'))) ++b;
  while (e > b && (s[e - 1] == ' ' || (s[e - 1] >= '\t' && s[e - 1] <= '\r'))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace qna::text
