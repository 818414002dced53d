#include <algorithm>
#include <set>

#include "qna/qg_engine.hpp"
#include "qna/text.hpp"

namespace qna::qg {

namespace {

const std::set<std::string>& auxiliaries() {
  static const std::set<std::string> words{"is",   "are",   "was",   "were",  "am",     "be",
                                           "has",  "have",  "had",   "do",    "does",   "did",
                                           "can",  "could", "will",  "would", "shall",  "should",
                                           "may",  "might", "must"};
  return words;
}

const std::set<std::string>& prepositions() {
  static const std::set<std::string> words{"in", "on", "at", "during", "since", "from", "to", "into", "by"};
  return words;
}

std::string wh_for(syntax::EntityType type) {
  switch (type) {
    case syntax::EntityType::Person: return "who";
    case syntax::EntityType::Date: return "when";
    case syntax::EntityType::Number: return "how many";
    case syntax::EntityType::Place: return "where";
    default: return "what";
  }
}

bool is_punct_token(const std::string& t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
  });
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

const std::vector<std::string>& wh_words() {
  static const std::vector<std::string> words{"what", "who", "when", "where", "how many"};
  return words;
}

std::optional<std::string> toy_rule_generate(const corpus::QGInput& input, syntax::SyntaxProvider& provider) {
  if (!input.has_markers()) return std::nullopt;
  std::vector<std::string> tokens;
  std::size_t first = 0, last = 0;
  bool open = false;
  for (const auto& t : input.sentence_tokens) {
    if (t == corpus::kAnswerOpen) {
      first = tokens.size();
      open = true;
    } else if (t == corpus::kAnswerClose) {
      if (!open || tokens.size() == first) return std::nullopt;
      last = tokens.size() - 1;
    } else {
      tokens.push_back(t);
    }
  }
  std::size_t end = tokens.size();
  while (end > 0 && is_punct_token(tokens[end - 1])) --end;
  if (end == 0 || last >= end) return std::nullopt;

  // Character offsets of our tokens in the space-joined sentence.
  const std::string sentence = text::join(tokens, " ");
  std::vector<std::size_t> offsets;
  std::size_t pos = 0;
  for (const auto& t : tokens) {
    offsets.push_back(pos);
    pos += t.size() + 1;
  }
  const auto analysis = provider.analyze(sentence);
  auto entity_at = [&](std::size_t tok) -> const syntax::Entity* {
    const std::size_t b = offsets[tok], e = b + tokens[tok].size();
    for (const auto& ent : analysis.entities) {
      const std::size_t eb = analysis.tokens[ent.first].begin, ee = analysis.tokens[ent.last].end;
      if (eb < e && b < ee) return &ent;
    }
    return nullptr;
  };
  syntax::EntityType type = syntax::EntityType::Other;
  for (std::size_t i = first; i <= last; ++i) {
    if (const auto* ent = entity_at(i)) {
      type = ent->type;
      break;
    }
  }
  const std::string wh = wh_for(type);

  std::vector<std::string> out;
  if (first == 0) {
    if (last + 1 >= end) return std::nullopt;
    out.push_back(capitalize(wh));
    out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(last + 1),
               tokens.begin() + static_cast<std::ptrdiff_t>(end));
  } else {
    if (last + 1 != end) return std::nullopt;
    std::size_t aux = first;
    for (std::size_t i = 0; i < first; ++i) {
      if (auxiliaries().count(text::to_lower(tokens[i]))) {
        aux = i;
        break;
      }
    }
    if (aux == first || aux == 0) return std::nullopt;
    std::vector<std::string> middle(tokens.begin() + static_cast<std::ptrdiff_t>(aux + 1),
                                    tokens.begin() + static_cast<std::ptrdiff_t>(first));
    if ((wh == "when" || wh == "where") && !middle.empty() && prepositions().count(text::to_lower(middle.back())))
      middle.pop_back();
    out.push_back(capitalize(wh));
    out.push_back(text::to_lower(tokens[aux]));
    for (std::size_t i = 0; i < aux; ++i)
      out.push_back(i == 0 && !entity_at(0) ? text::to_lower(tokens[0]) : tokens[i]);
    out.insert(out.end(), middle.begin(), middle.end());
  }
  return text::join(out, " ") + "?";
}

}  // namespace qna::qg
