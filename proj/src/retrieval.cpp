#include "qna/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "qna/text.hpp"

namespace qna::retrieval {

void RetrievalConfig::validate() const {
  if (k < 1) throw std::invalid_argument("retrieval k must be >= 1");
  if (k1 < 0.0) throw std::invalid_argument("bm25 k1 must be >= 0");
  if (b < 0.0 || b > 1.0) throw std::invalid_argument("bm25 b must be in [0, 1]");
}

double okapi_idf(std::size_t num_docs, std::size_t doc_freq) {
  const double n = static_cast<double>(num_docs);
  const double df = static_cast<double>(doc_freq);
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double score_bm25(const std::vector<std::string>& query_terms, const TermCounts& tf,
                  double doc_len, double avg_doc_len,
                  const std::unordered_map<std::string, double>& idf_table,
                  const RetrievalConfig& config) {
  const double norm = config.k1 * (1.0 - config.b + config.b * doc_len / avg_doc_len);
  double score = 0.0;
  for (const auto& t : query_terms) {
    auto f = tf.find(t);
    if (f == tf.end()) continue;
    auto idf = idf_table.find(t);
    if (idf == idf_table.end()) continue;
    const double freq = static_cast<double>(f->second);
    score += idf->second * freq * (config.k1 + 1.0) / (freq + norm);
  }
  return score;
}

Bm25Index::Bm25Index(const std::vector<std::vector<std::string>>& paragraphs) {
  std::unordered_map<std::string, std::size_t> df;
  double total = 0.0;
  for (const auto& p : paragraphs) {
    TermCounts c;
    for (const auto& tok : p) ++c[text::to_lower(tok)];
    for (const auto& [term, _] : c) ++df[term];
    lengths_.push_back(static_cast<double>(p.size()));
    total += static_cast<double>(p.size());
    counts_.push_back(std::move(c));
  }
  avg_len_ = paragraphs.empty() ? 0.0 : total / static_cast<double>(paragraphs.size());
  for (const auto& [term, n] : df) idf_[term] = okapi_idf(paragraphs.size(), n);
}

double Bm25Index::idf(const std::string& term) const {
  auto it = idf_.find(term);
  return it == idf_.end() ? 0.0 : it->second;
}

std::vector<double> Bm25Index::scores(const std::vector<std::string>& query_tokens,
                                      const RetrievalConfig& config) const {
  std::vector<std::string> q;
  q.reserve(query_tokens.size());
  for (const auto& t : query_tokens) q.push_back(text::to_lower(t));
  std::vector<double> out(counts_.size(), 0.0);
  if (avg_len_ <= 0.0) return out;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (lengths_[i] <= 0.0) continue;
    out[i] = score_bm25(q, counts_[i], lengths_[i], avg_len_, idf_, config);
  }
  return out;
}

std::vector<RankedParagraph> rank_paragraphs(const std::vector<std::string>& question_tokens,
                                             const std::vector<std::vector<std::string>>& paragraphs,
                                             const RetrievalConfig& config) {
  config.validate();
  const Bm25Index index(paragraphs);
  const auto s = index.scores(question_tokens, config);
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  const std::size_t n = std::min(config.k, order.size());
  std::vector<RankedParagraph> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r) out.push_back({order[r], s[order[r]], r + 1});
  return out;
}

std::vector<RankedParagraph> rank_paragraphs(const std::vector<std::string>& question_tokens,
                                             const std::vector<corpus::Paragraph>& paragraphs,
                                             const RetrievalConfig& config) {
  std::vector<std::vector<std::string>> toks;
  toks.reserve(paragraphs.size());
  for (const auto& p : paragraphs) toks.push_back(p.tokens);
  return rank_paragraphs(question_tokens, toks, config);
}

}  // namespace qna::retrieval
