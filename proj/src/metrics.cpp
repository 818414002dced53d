#include "qna/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "qna/text.hpp"

namespace qna::metrics {

namespace {

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string lowered = text::to_lower(s);
  std::string no_punct;
  no_punct.reserve(lowered.size());
  for (std::size_t i = 0; i < lowered.size();) {
    const auto c = text::decode_utf8(lowered, i);
    if (!(c.length == 1 && text::is_ascii_punct(c.value))) no_punct.append(lowered, i, c.length);
    i += c.length;
  }
  // \b(a|an|the)\b -> " ": an article only matches as a whole word.
  std::string no_articles;
  no_articles.reserve(no_punct.size());
  for (std::size_t i = 0; i < no_punct.size();) {
    const auto c = text::decode_utf8(no_punct, i);
    if (!text::is_word_char(c.value)) {
      no_articles.append(no_punct, i, c.length);
      i += c.length;
      continue;
    }
    std::size_t j = i;
    while (j < no_punct.size()) {
      const auto d = text::decode_utf8(no_punct, j);
      if (!text::is_word_char(d.value)) break;
      j += d.length;
    }
    const std::string_view word(no_punct.data() + i, j - i);
    if (is_article(word)) {
      no_articles += ' ';
    } else {
      no_articles.append(word);
    }
    i = j;
  }
  return text::join(text::split_whitespace(no_articles), " ");
}

std::vector<std::string> answer_tokens(std::string_view s) {
  if (s.empty()) return {};
  return text::split_whitespace(normalize_answer(s));
}

int exact_pair(std::string_view pred, std::string_view gold) {
  return normalize_answer(pred) == normalize_answer(gold) ? 1 : 0;
}

double f1_pair(std::string_view pred, std::string_view gold) {
  const auto p = answer_tokens(pred);
  const auto g = answer_tokens(gold);
  if (p.empty() || g.empty()) return p == g ? 1.0 : 0.0;
  std::unordered_map<std::string, long> counts;
  for (const auto& t : g) ++counts[t];
  long same = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  }
  if (same == 0) return 0.0;
  const double precision = static_cast<double>(same) / static_cast<double>(p.size());
  const double recall = static_cast<double>(same) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

std::vector<std::string> effective_golds(const std::vector<std::string>& golds) {
  std::vector<std::string> out;
  for (const auto& g : golds)
    if (!normalize_answer(g).empty()) out.push_back(g);
  if (out.empty()) out.emplace_back();
  return out;
}

}  // namespace

int compute_em(std::string_view pred, const std::vector<std::string>& golds) {
  int best = 0;
  for (const auto& g : effective_golds(golds)) best = std::max(best, exact_pair(pred, g));
  return best;
}

double compute_f1(std::string_view pred, const std::vector<std::string>& golds) {
  double best = 0.0;
  for (const auto& g : effective_golds(golds)) best = std::max(best, f1_pair(pred, g));
  return best;
}

bool fuzzy_match(std::string_view pred, std::string_view gold) {
  const auto p = answer_tokens(pred);
  const auto gt = answer_tokens(gold);
  const std::set<std::string> g(gt.begin(), gt.end());
  return std::any_of(p.begin(), p.end(), [&](const std::string& t) { return g.count(t) > 0; });
}

nlohmann::json EvalReport::to_json(bool with_examples) const {
  nlohmann::json j = {{"exact", em}, {"f1", f1}, {"total", n_examples}, {"missing", n_missing}};
  if (with_examples) {
    auto& arr = j["per_example"] = nlohmann::json::array();
    for (const auto& e : per_example)
      arr.push_back({{"id", e.qid}, {"prediction", e.prediction}, {"em", e.em}, {"f1", e.f1}});
  }
  return j;
}

EvalReport evaluate(const std::vector<corpus::QAExample>& examples, const Predictions& predictions) {
  EvalReport r;
  double em_sum = 0.0, f1_sum = 0.0;
  for (const auto& ex : examples) {
    std::vector<std::string> golds;
    if (ex.is_answerable)
      for (const auto& g : ex.gold_answers) golds.push_back(g.text);
    auto it = predictions.find(ex.qid);
    if (it == predictions.end()) ++r.n_missing;
    const std::string pred = it == predictions.end() ? std::string() : it->second;
    ExampleScore s{ex.qid, pred, compute_em(pred, golds), compute_f1(pred, golds)};
    em_sum += s.em;
    f1_sum += s.f1;
    r.per_example.push_back(std::move(s));
  }
  r.n_examples = examples.size();
  if (r.n_examples > 0) {
    r.em = 100.0 * em_sum / static_cast<double>(r.n_examples);
    r.f1 = 100.0 * f1_sum / static_cast<double>(r.n_examples);
  }
  return r;
}

Predictions load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file " + path.string());
  const auto j = nlohmann::json::parse(in);
  if (!j.is_object()) throw std::runtime_error("predictions file must be a JSON object");
  Predictions p;
  for (auto it = j.begin(); it != j.end(); ++it) p[it.key()] = it.value().get<std::string>();
  return p;
}

void save_predictions(const Predictions& predictions, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions file " + path.string());
  out << nlohmann::json(predictions).dump(2, ' ', false, nlohmann::json::error_handler_t::replace)
      << '\n';
}

}  // namespace qna::metrics
