#include "qna/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "qna/metrics.hpp"

namespace qna::pipeline {

using nlohmann::json;

json item_to_json(const QAPairItem& item) {
  return {{"question", item.question},
          {"answer", item.answer},
          {"sentence_index", item.source_sentence_index},
          {"qg_log_prob", item.qg_log_prob},
          {"qa_score", item.qa_score}};
}

QAPairItem item_from_json(const json& j) {
  return {j.at("question").get<std::string>(), j.at("answer").get<std::string>(),
          j.at("sentence_index").get<int>(), j.at("qg_log_prob").get<double>(), j.at("qa_score").get<double>()};
}

json catalog_to_json(const std::vector<QAPairItem>& items) {
  json out = json::array();
  for (const auto& it : items) out.push_back(item_to_json(it));
  return out;
}

std::vector<QAPairItem> catalog_from_json(const json& j) {
  std::vector<QAPairItem> out;
  for (const auto& e : j) out.push_back(item_from_json(e));
  return out;
}

void FilterConfig::validate() const {
  if (!(overlap_threshold >= 0.0 && overlap_threshold <= 1.0))
    throw ConfigError("overlap threshold must be in [0, 1]");
}

std::string build_context_window(const std::vector<std::string>& sentences, std::size_t index) {
  if (index >= sentences.size()) throw std::out_of_range("sentence index outside document");
  const std::size_t first = index == 0 ? 0 : index - 1;
  const std::size_t last = std::min(sentences.size() - 1, index + 1);
  std::string out;
  for (std::size_t i = first; i <= last; ++i) {
    if (i > first) out += ' ';
    out += sentences[i];
  }
  return out;
}

double token_overlap(std::string_view a, std::string_view b, OverlapMeasure measure) {
  const auto ta = metrics::answer_tokens(a), tb = metrics::answer_tokens(b);
  const std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
  if (sa.empty() || sb.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : sa) common += sb.count(t);
  const std::size_t denom = measure == OverlapMeasure::Jaccard ? sa.size() + sb.size() - common
                                                                : std::min(sa.size(), sb.size());
  return static_cast<double>(common) / static_cast<double>(denom);
}

bool redundant_pair(const QAPairItem& a, const QAPairItem& b, const FilterConfig& config) {
  if (metrics::normalize_answer(a.question) == metrics::normalize_answer(b.question)) return true;
  if (metrics::normalize_answer(a.answer) == metrics::normalize_answer(b.answer)) return true;
  return token_overlap(a.question + " " + a.answer, b.question + " " + b.answer, config.measure) >=
         config.overlap_threshold;
}

bool self_redundant(const QAPairItem& item, const FilterConfig& config) {
  return token_overlap(item.question, item.answer, config.measure) >= config.overlap_threshold;
}

std::vector<QAPairItem> filter_items(const std::vector<QAPairItem>& items, const FilterConfig& config) {
  config.validate();
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = items[x];
    const auto& b = items[y];
    if (a.qg_log_prob != b.qg_log_prob) return a.qg_log_prob > b.qg_log_prob;
    if (a.source_sentence_index != b.source_sentence_index) return a.source_sentence_index < b.source_sentence_index;
    return a.question < b.question;
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    if (config.self_redundancy_guard && self_redundant(items[i], config)) continue;
    const bool clash = std::any_of(kept.begin(), kept.end(),
                                   [&](std::size_t k) { return redundant_pair(items[i], items[k], config); });
    if (!clash) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<QAPairItem> out;
  for (std::size_t i : kept) out.push_back(items[i]);
  return out;
}

CatalogResult generate_catalog(std::string_view text, const qg::QGModel& qg_model, const qa::QAModel& qa_model,
                               syntax::SyntaxProvider& provider, const CatalogConfig& config) {
  config.filter.validate();
  config.beam.validate();
  CatalogResult result;
  const auto sentences = candidates::segment_sentences(text, provider);
  result.sentences = sentences.size();
  std::vector<std::string> texts;
  for (const auto& s : sentences) texts.push_back(s.text);

  retrieval::RetrievalConfig single;
  single.k = 1;
  std::vector<QAPairItem> items;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const int index = static_cast<int>(i);
    try {
      std::vector<corpus::QGInput> inputs;
      for (const auto& c : candidates::extract_candidates(texts[i], provider, config.candidates, index,
                                                          &result.diagnostics))
        inputs.push_back(candidates::annotate(texts[i], c, &result.diagnostics));
      inputs.push_back(corpus::make_unmarked_input(texts[i], index));

      corpus::Document passage;
      passage.doc_id = "s" + std::to_string(i);
      passage.paragraphs.push_back(corpus::make_paragraph("w" + std::to_string(i), build_context_window(texts, i)));

      std::vector<QAPairItem> local;
      for (const auto& g : qg::generate_questions(inputs, qg_model, config.beam, &result.diagnostics)) {
        if (g.failed || text::trim(g.question).empty()) continue;
        ++result.generated;
        const auto pred = qa_model.predict(g.question, passage, single, config.decode);
        if (!pred.answerable || text::trim(pred.answer_text).empty()) {
          ++result.unanswerable;
          continue;
        }
        local.push_back({g.question, pred.answer_text, index, g.log_prob, pred.score});
      }
      items.insert(items.end(), local.begin(), local.end());
    } catch (const std::exception& e) {
      ++result.sentences_failed;
      result.diagnostics.warn("sentence_failed", "sentence " + std::to_string(i) + ": " + e.what());
    }
  }
  result.items = filter_items(items, config.filter);
  return result;
}

QAonQGReport qa_on_qg_score(const qg::QGModel& qg_model, const qa::QAModel& qa_model,
                            const std::vector<corpus::QGExample>& examples,
                            const std::vector<std::string>& paragraphs, const qg::BeamConfig& beam,
                            Diagnostics* diagnostics) {
  if (paragraphs.size() != examples.size())
    throw std::invalid_argument("qa_on_qg_score needs one paragraph per example");
  QAonQGReport report;
  retrieval::RetrievalConfig single;
  single.k = 1;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    double f1 = 0.0;
    std::string question;
    try {
      const auto g = qg_model.generate(examples[i].input, beam);
      question = g.question;
      if (text::trim(question).empty()) throw std::runtime_error("empty question");
      corpus::Document doc;
      doc.doc_id = "e" + std::to_string(i);
      doc.paragraphs.push_back(corpus::make_paragraph("p0", paragraphs[i]));
      const auto pred = qa_model.predict(question, doc, single);
      f1 = metrics::f1_pair(pred.answerable ? pred.answer_text : "", examples[i].input.answer_text());
    } catch (const std::exception& e) {
      ++report.failures;
      if (diagnostics) diagnostics->warn("generation_failed", e.what());
    }
    report.per_example.push_back(f1);
    report.questions.push_back(question);
  }
  report.n = examples.size();
  if (report.n > 0)
    report.mean_f1 = std::accumulate(report.per_example.begin(), report.per_example.end(), 0.0) /
                     static_cast<double>(report.n);
  return report;
}

}  // namespace qna::pipeline
