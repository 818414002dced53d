#include <algorithm>
#include <cctype>
#include <set>
#include <string>

#include "qna/candidates.hpp"
#include "qna/text.hpp"

namespace qna {

namespace syntax {

std::string_view entity_type_name(EntityType t) {
  switch (t) {
    case EntityType::Person: return "person";
    case EntityType::Place: return "place";
    case EntityType::Date: return "date";
    case EntityType::Number: return "number";
    case EntityType::Organization: return "organization";
    case EntityType::Other: return "other";
  }
  return "other";
}

}  // namespace syntax

namespace candidates {

namespace {

using Words = std::set<std::string, std::less<>>;

const Words kDeterminers{"the", "a", "an", "this", "that", "these", "those", "its", "his", "her", "their",
                         "our", "my", "your", "every", "each", "some", "no", "any", "all", "both"};
const Words kPrepositions{"in",     "on",      "at",     "to",      "from",   "by",     "with",   "of",
                          "for",    "during",  "since",  "into",    "under",  "over",   "after",  "before",
                          "beside", "near",    "about",  "through", "across", "between", "among", "without",
                          "within", "against", "toward", "towards", "upon",   "along",  "behind", "above",
                          "below",  "around",  "until",  "like",    "onto",   "beyond", "despite"};
const Words kAuxiliaries{"is",  "are",  "was",   "were", "be",    "been",  "being",  "am",    "has",
                         "have", "had", "do",    "does", "did",   "will",  "would",  "can",   "could",
                         "shall", "should", "may", "might", "must"};
const Words kConjunctions{"and", "or", "but", "nor"};
const Words kPronouns{"he", "she", "it", "they", "we", "i", "you", "him", "them", "us", "me", "who", "which",
                      "whom", "what", "there"};
const Words kSubordinators{"because", "although", "while", "if", "though", "whereas", "unless", "as", "than"};
const Words kAdverbs{"not", "also", "never", "often", "very", "still", "later", "then", "soon", "once",
                     "already", "only", "just", "now", "again", "here", "there"};
const Words kNumberWords{"one",    "two",     "three",   "four",     "five",     "six",     "seven",
                         "eight",  "nine",    "ten",     "eleven",   "twelve",   "thirteen", "fourteen",
                         "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty", "thirty",
                         "forty",  "fifty",   "sixty",   "seventy",  "eighty",   "ninety",  "hundred",
                         "thousand", "million", "billion", "dozen"};
const Words kMonths{"january", "february", "march",     "april",   "may",      "june",
                    "july",    "august",   "september", "october", "november", "december"};
const Words kVerbs{"born", "made",  "built", "wrote", "won",   "ran",  "began", "became", "found",  "left",
                   "went", "came",  "took",  "gave",  "held",  "led",  "met",   "sold",   "taught", "told",
                   "grew", "stood", "knew",  "saw",   "fell",  "drew", "rose",  "lost",   "paid",   "sent",
                   "spent", "kept", "brought", "bought", "thought", "moved", "lives", "works", "has",
                   "overlooks", "line", "lines", "carried", "known", "written", "given", "taken", "seen"};
const Words kAdjectives{"new",     "old",     "first",  "last",    "large",   "small",   "great",  "famous",
                        "black",   "white",   "blue",   "red",     "green",   "grey",    "gray",   "northern",
                        "southern", "eastern", "western", "early",  "late",    "long",    "short",  "high",
                        "low",     "young",   "big",    "little",  "main",    "major",   "local",  "coastal",
                        "several", "many",    "few",    "other",   "same",    "next",    "former", "annual"};
const Words kTitles{"mr", "mrs", "ms", "dr", "prof", "sir", "lady", "lord", "king", "queen", "saint", "st",
                    "president", "general", "captain"};
const Words kOrgWords{"company", "university", "college", "bank",   "church",  "mill",  "school",  "museum",
                      "society", "council",    "party",   "army",   "club",    "institute", "corporation",
                      "inc",     "ltd",        "group",   "league", "academy", "hospital", "library",
                      "glassworks", "orchestra", "association", "ministry", "department"};
const Words kPlaceWords{"river", "mountain", "mount", "lake", "sea", "ocean", "island", "valley", "city",
                        "county", "province", "strait", "bay", "street", "road", "square", "forest", "coast"};
const Words kPlacePreps{"in", "to", "at", "from", "near", "into", "across", "toward", "towards", "beside"};
const Words kAbbreviations{"mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e",
                           "inc", "ltd", "co", "no", "gen", "capt", "mt", "ft", "approx", "dept", "est"};

bool contains(const Words& w, std::string_view s) { return w.find(s) != w.end(); }

bool is_capitalized(const std::string& s) {
  return !s.empty() && std::isupper(static_cast<unsigned char>(s[0]));
}

bool is_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool is_punct(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || (static_cast<unsigned char>(c) & 0x80);
  });
}

bool is_year(const std::string& s) {
  if (s.size() != 4 || !is_digits(s)) return false;
  const int y = std::stoi(s);
  return y >= 1000 && y <= 2199;
}

bool looks_verb(const std::string& lower) {
  if (contains(kVerbs, lower)) return true;
  return lower.size() > 4 && lower.ends_with("ed") && !contains(kAdjectives, lower);
}

bool looks_adjective(const std::string& lower) {
  if (contains(kAdjectives, lower)) return true;
  for (const char* suf : {"ous", "ful", "ive", "ical", "able", "ible", "ern", "ish", "less"})
    if (lower.size() > 5 && lower.ends_with(suf)) return true;
  return false;
}

std::vector<std::string> tag(const std::vector<text::Token>& tokens) {
  std::vector<std::string> pos(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& w = tokens[i].text;
    const auto lower = text::to_lower(w);
    if (is_punct(w)) pos[i] = "PUNCT";
    else if (is_digits(w) || contains(kNumberWords, lower)) pos[i] = "NUM";
    else if (contains(kDeterminers, lower)) pos[i] = "DET";
    else if (contains(kAuxiliaries, lower)) pos[i] = "AUX";
    else if (contains(kPrepositions, lower)) pos[i] = "ADP";
    else if (contains(kConjunctions, lower)) pos[i] = "CCONJ";
    else if (contains(kPronouns, lower)) pos[i] = "PRON";
    else if (contains(kSubordinators, lower)) pos[i] = "SCONJ";
    else if (contains(kAdverbs, lower) || (lower.size() > 4 && lower.ends_with("ly"))) pos[i] = "ADV";
    else if (is_capitalized(w) && i > 0) pos[i] = "PROPN";
    else if (is_capitalized(w)) {
      // Sentence-initial: a known common word keeps its class.
      if (looks_verb(lower)) pos[i] = "VERB";
      else if (looks_adjective(lower)) pos[i] = "ADJ";
      else if (i + 1 < tokens.size() && (is_capitalized(tokens[i + 1].text) ||
                                         contains(kAuxiliaries, text::to_lower(tokens[i + 1].text)) ||
                                         looks_verb(text::to_lower(tokens[i + 1].text))))
        pos[i] = lower.ends_with("s") && !is_capitalized(tokens[i + 1].text) ? "NOUN" : "PROPN";
      else pos[i] = "NOUN";
    } else if (looks_verb(lower)) pos[i] = "VERB";
    else if (looks_adjective(lower)) pos[i] = "ADJ";
    else pos[i] = "NOUN";
  }
  // "to" before a verb is an infinitive marker.
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    if (text::to_lower(tokens[i].text) == "to" && pos[i + 1] == "VERB") pos[i] = "PART";
  return pos;
}

struct Phrase {
  std::size_t first, last, head;
};

bool nominal(const std::string& p) { return p == "NOUN" || p == "PROPN" || p == "NUM" || p == "PRON"; }

std::vector<Phrase> noun_phrases(const std::vector<text::Token>& tokens, const std::vector<std::string>& pos) {
  std::vector<Phrase> out;
  std::size_t i = 0;
  while (i < pos.size()) {
    if (pos[i] == "PRON") {
      out.push_back({i, i, i});
      ++i;
      continue;
    }
    if (!(pos[i] == "DET" || pos[i] == "ADJ" || pos[i] == "NUM" || pos[i] == "NOUN" || pos[i] == "PROPN")) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::size_t last_nominal = SIZE_MAX;
    while (j < pos.size() && (pos[j] == "DET" || pos[j] == "ADJ" || pos[j] == "NUM" || pos[j] == "NOUN" ||
                              pos[j] == "PROPN")) {
      if (j > i && pos[j] == "DET") break;
      // "Bank of England": of between proper nouns stays inside.
      if (nominal(pos[j])) last_nominal = j;
      ++j;
      if (j + 1 < pos.size() && pos[j - 1] == "PROPN" && text::to_lower(tokens[j].text) == "of" &&
          pos[j + 1] == "PROPN")
        ++j;
    }
    if (last_nominal == SIZE_MAX) {
      i = j;
      continue;
    }
    out.push_back({i, last_nominal, last_nominal});
    i = last_nominal + 1;
  }
  return out;
}

std::vector<syntax::Entity> entities(const std::vector<text::Token>& tokens, const std::vector<std::string>& pos) {
  std::vector<syntax::Entity> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const auto lower = text::to_lower(tokens[i].text);
    const bool month = contains(kMonths, lower) && is_capitalized(tokens[i].text) && lower != "may";
    if (month || is_year(tokens[i].text)) {
      std::size_t j = i;
      // "March 3 , 1901" / "3 March 1901"
      while (j + 1 < tokens.size() && (is_digits(tokens[j + 1].text) ||
                                       (contains(kMonths, text::to_lower(tokens[j + 1].text)) &&
                                        is_capitalized(tokens[j + 1].text)) ||
                                       (tokens[j + 1].text == "," && j + 2 < tokens.size() &&
                                        is_year(tokens[j + 2].text))))
        ++j;
      out.push_back({i, j, syntax::EntityType::Date});
      i = j + 1;
      continue;
    }
    if (pos[i] == "NUM") {
      std::size_t j = i;
      while (j + 1 < tokens.size() && pos[j + 1] == "NUM" && !is_year(tokens[j + 1].text)) ++j;
      const bool date = j + 1 < tokens.size() && contains(kMonths, text::to_lower(tokens[j + 1].text)) &&
                        is_capitalized(tokens[j + 1].text);
      if (date) {
        std::size_t k = j + 1;
        while (k + 1 < tokens.size() && is_digits(tokens[k + 1].text)) ++k;
        out.push_back({i, k, syntax::EntityType::Date});
        i = k + 1;
      } else {
        out.push_back({i, j, syntax::EntityType::Number});
        i = j + 1;
      }
      continue;
    }
    if (pos[i] != "PROPN") {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < tokens.size() &&
           (pos[j + 1] == "PROPN" ||
            (text::to_lower(tokens[j + 1].text) == "of" && j + 2 < tokens.size() && pos[j + 2] == "PROPN")))
      ++j;
    syntax::EntityType type = syntax::EntityType::Other;
    bool org = false, place = false;
    for (std::size_t k = i; k <= j; ++k) {
      const auto w = text::to_lower(tokens[k].text);
      org = org || contains(kOrgWords, w);
      place = place || contains(kPlaceWords, w);
    }
    // A preceding "the river" / "the Grey Strait" style noun marks places too.
    if (i > 0 && contains(kPlaceWords, text::to_lower(tokens[i - 1].text))) place = true;
    const bool after_title = i > 0 && contains(kTitles, text::to_lower(tokens[i - 1].text));
    const bool after_place_prep = i > 0 && contains(kPlacePreps, text::to_lower(tokens[i - 1].text));
    if (org) type = syntax::EntityType::Organization;
    else if (place || after_place_prep) type = syntax::EntityType::Place;
    else if (after_title || j > i || i == 0) type = syntax::EntityType::Person;
    out.push_back({i, j, type});
    i = j + 1;
  }
  return out;
}

// Heuristic dependency arcs with spaCy-style English labels, except that
// direct objects are labelled "obj".
std::vector<syntax::Arc> parse(const std::vector<text::Token>& tokens, const std::vector<std::string>& pos,
                               const std::vector<Phrase>& phrases) {
  const std::size_t n = tokens.size();
  std::vector<syntax::Arc> arcs(n, syntax::Arc{-1, ""});
  if (n == 0) return arcs;
  std::vector<int> phrase_of(n, -1);
  for (std::size_t p = 0; p < phrases.size(); ++p)
    for (std::size_t k = phrases[p].first; k <= phrases[p].last; ++k) phrase_of[k] = static_cast<int>(p);

  std::size_t root = n;
  for (std::size_t i = 0; i < n && root == n; ++i)
    if (pos[i] == "VERB" && phrase_of[i] < 0) root = i;
  if (root == n)
    for (std::size_t i = 0; i < n && root == n; ++i)
      if (pos[i] == "AUX") root = i;
  if (root == n && !phrases.empty()) root = phrases.front().head;
  if (root == n) root = 0;
  arcs[root] = {-1, "ROOT"};
  const bool copular = pos[root] == "AUX";
  const int r = static_cast<int>(root);

  // Phrase-internal arcs.
  for (const auto& ph : phrases) {
    for (std::size_t k = ph.first; k <= ph.last; ++k) {
      if (k == ph.head) continue;
      const auto lower = text::to_lower(tokens[k].text);
      std::string label = "compound";
      if (pos[k] == "DET") label = "det";
      else if (pos[k] == "ADJ") label = "amod";
      else if (pos[k] == "NUM") label = "nummod";
      else if (lower == "of") label = "prep";
      arcs[k] = {static_cast<int>(ph.head), label};
    }
  }

  int last_head = -1;  // most recent phrase head, for conjunction
  int pending_prep = -1;
  int pending_cc = -1;
  int pending_to = -1;
  bool object_taken = false;
  int gov = r;  // governor for arguments after the root
  for (std::size_t i = 0; i < n; ++i) {
    if (i == root) {
      last_head = r;
      continue;
    }
    if (phrase_of[i] >= 0) {
      const auto& ph = phrases[static_cast<std::size_t>(phrase_of[i])];
      if (i != ph.head) continue;
      const int h = static_cast<int>(i);
      if (pending_prep >= 0) {
        arcs[i] = {pending_prep, "pobj"};
        pending_prep = -1;
      } else if (pending_cc >= 0 && last_head >= 0) {
        arcs[i] = {last_head, "conj"};
        arcs[static_cast<std::size_t>(pending_cc)].head = last_head;
        pending_cc = -1;
      } else if (i < root) {
        arcs[i] = {r, "nsubj"};
      } else if (!object_taken) {
        arcs[i] = {gov, copular && gov == r ? "attr" : "obj"};
        object_taken = true;
      } else {
        arcs[i] = {gov, "npadvmod"};
      }
      last_head = h;
      continue;
    }
    const auto& p = pos[i];
    if (p == "PUNCT") {
      arcs[i] = {r, "punct"};
    } else if (p == "ADP") {
      // Prepositions after a noun phrase that follows the verb modify that noun.
      const int attach = (i > root && last_head >= 0 && last_head != r &&
                          text::to_lower(tokens[i].text) == "of")
                             ? last_head
                             : (i > root ? gov : r);
      arcs[i] = {attach, "prep"};
      pending_prep = static_cast<int>(i);
    } else if (p == "CCONJ") {
      arcs[i] = {last_head >= 0 ? last_head : r, "cc"};
      pending_cc = static_cast<int>(i);
    } else if (p == "AUX") {
      arcs[i] = {r, i < root ? "aux" : "dep"};
    } else if (p == "PART") {
      pending_to = static_cast<int>(i);
      arcs[i] = {r, "aux"};
    } else if (p == "VERB") {
      if (pending_to >= 0) {
        arcs[i] = {r, "xcomp"};
        arcs[static_cast<std::size_t>(pending_to)].head = static_cast<int>(i);
        pending_to = -1;
      } else if (pending_cc >= 0) {
        arcs[i] = {r, "conj"};
        arcs[static_cast<std::size_t>(pending_cc)].head = r;
        pending_cc = -1;
      } else if (last_head >= 0 && last_head != r && i > root) {
        arcs[i] = {last_head, "acl"};
      } else {
        arcs[i] = {r, "dep"};
      }
      object_taken = false;
      last_head = static_cast<int>(i);
      gov = static_cast<int>(i);
    } else if (p == "ADV") {
      arcs[i] = {r, "advmod"};
    } else {
      arcs[i] = {r, "dep"};
    }
  }
  // A preposition left without an object takes no dependents; fine.
  for (std::size_t i = 0; i < n; ++i)
    if (arcs[i].label.empty()) arcs[i] = {r, "dep"};
  return arcs;
}

}  // namespace

std::vector<syntax::Sentence> DeskProvider::segment(std::string_view text) {
  std::vector<syntax::Sentence> out;
  const auto tokens = text::tokenize_words(text);
  std::size_t start = 0;  // token index of the current sentence start
  auto flush = [&](std::size_t last) {
    const std::size_t b = tokens[start].begin, e = tokens[last].end;
    out.push_back({std::string(text.substr(b, e - b)), b});
    start = last + 1;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i].text;
    const bool last = i + 1 == tokens.size();
    // Blank line always ends a sentence.
    if (!last && text.substr(tokens[i].end, tokens[i + 1].begin - tokens[i].end).find("\n\n") !=
                     std::string_view::npos) {
      flush(i);
      continue;
    }
    if (t != "." && t != "!" && t != "?") continue;
    std::size_t end = i;
    while (end + 1 < tokens.size() && tokens[end + 1].begin == tokens[end].end &&
           (tokens[end + 1].text == "\"" || tokens[end + 1].text == ")" || tokens[end + 1].text == "'" ||
            tokens[end + 1].text == "." || tokens[end + 1].text == "!" || tokens[end + 1].text == "?"))
      ++end;
    if (end + 1 == tokens.size()) {
      i = end;
      flush(end);
      continue;
    }
    if (tokens[end + 1].begin == tokens[end].end) continue;  // "3.5", "e.g"
    if (t == "." && i > start) {
      const auto prev = text::to_lower(tokens[i - 1].text);
      if (tokens[i - 1].end == tokens[i].begin && contains(kAbbreviations, prev)) continue;
    }
    const auto& next = tokens[end + 1].text;
    const auto c = static_cast<unsigned char>(next[0]);
    if (std::islower(c)) continue;
    flush(end);
    i = end;
  }
  if (start < tokens.size()) flush(tokens.size() - 1);
  return out;
}

syntax::Analysis DeskProvider::analyze(std::string_view sentence) {
  syntax::Analysis a;
  a.sentence = std::string(sentence);
  a.tokens = text::tokenize_words(sentence);
  a.pos = tag(a.tokens);
  const auto phrases = noun_phrases(a.tokens, a.pos);
  a.entities = entities(a.tokens, a.pos);
  for (const auto& ph : phrases)
    if (a.pos[ph.head] == "NOUN" || a.pos[ph.head] == "PROPN") a.noun_chunks.push_back({ph.first, ph.last});
  a.arcs = parse(a.tokens, a.pos, phrases);
  return a;
}

}  // namespace candidates
}  // namespace qna
