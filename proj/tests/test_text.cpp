#include <doctest.h>

#include <random>

#include "qna/text.hpp"

using namespace qna::text;

TEST_CASE("utf8 decode and append round-trip") {
  const std::string s = "a\xC3\xA9\xE2\x82\xAC\xF0\x9F\x98\x80";
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = decode_utf8(s, i);
    append_utf8(out, c.value);
    i += c.length;
  }
  CHECK(out == s);
  CHECK(decode_utf8(s, 1).value == 0xE9);
  CHECK(decode_utf8(s, 3).value == 0x20AC);
  CHECK(decode_utf8(s, 6).value == 0x1F600);
}

TEST_CASE("invalid utf8 bytes advance by one") {
  const std::string s = "\xFF\x80x";
  CHECK(decode_utf8(s, 0).length == 1);
  CHECK(decode_utf8(s, 1).length == 1);
  CHECK(tokenize_words(s).size() == 1);
  CHECK(tokenize_words("a \xFF, b").size() == 4);
}

TEST_CASE("split_whitespace matches python str.split") {
  CHECK(split_whitespace("  a\tb\n\nc  ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_whitespace("x\xC2\xA0y") == std::vector<std::string>{"x", "y"});
  CHECK(split_whitespace("").empty());
}

TEST_CASE("tokenize_words splits punctuation and records offsets") {
  const std::string s = "Tesla's lab, in 1899.";
  const auto toks = tokenize_words(s);
  CHECK(token_strings(toks) == std::vector<std::string>{"Tesla", "'", "s", "lab", ",", "in", "1899", "."});
  for (const auto& t : toks) CHECK(s.substr(t.begin, t.end - t.begin) == t.text);
}

TEST_CASE("tokenize_words offsets are increasing and reconstruct the text") {
  std::mt19937 rng(3);
  const std::vector<std::string> pieces{"a", "Bc", " ", "  ", ",", ".", "\xC3\xA9t\xC3\xA9", "\t", "9", "\xE2\x80\x94"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    for (int i = 0; i < 12; ++i) s += pieces[rng() % pieces.size()];
    const auto toks = tokenize_words(s);
    std::size_t prev = 0;
    std::string joined;
    for (const auto& t : toks) {
      CHECK(t.begin >= prev);
      CHECK(t.end > t.begin);
      CHECK(s.substr(t.begin, t.end - t.begin) == t.text);
      prev = t.end;
      joined += t.text;
    }
    CHECK(joined == strip_all_space(s));
  }
}

TEST_CASE("to_lower covers accented letters") {
  CHECK(to_lower("ÉCLAIR Straße") == "éclair straße");
  CHECK(to_lower("ΑΒΓ") == "αβγ");
}

TEST_CASE("trim and join") {
  CHECK(trim("  x y \n") == "x y");
  CHECK(trim("   ").empty());
  CHECK(join({"a", "b", "c"}, "-") == "a-b-c");
  CHECK(join({}, "-").empty());
}
