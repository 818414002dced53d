#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "qna/corpus.hpp"

namespace qna::retrieval {

struct RetrievalConfig {
  std::size_t k = 4;
  double k1 = 1.5;
  double b = 0.75;

  void validate() const;
};

struct RankedParagraph {
  std::size_t paragraph = 0;  // index into the input list
  double bm25_score = 0.0;
  std::size_t rank = 0;       // 1-based
};

using TermCounts = std::unordered_map<std::string, std::size_t>;

/// Okapi BM25 for one document: sum over query terms (repeats included) of
/// idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * doc_len / avg_doc_len)).
double score_bm25(const std::vector<std::string>& query_terms, const TermCounts& term_frequencies,
                  double doc_len, double avg_doc_len,
                  const std::unordered_map<std::string, double>& idf_table,
                  const RetrievalConfig& config);

double okapi_idf(std::size_t num_docs, std::size_t doc_freq);

/// Immutable per-document index. Tokens are lowercased; nothing else.
class Bm25Index {
 public:
  explicit Bm25Index(const std::vector<std::vector<std::string>>& paragraphs);

  std::vector<double> scores(const std::vector<std::string>& query_tokens,
                             const RetrievalConfig& config) const;
  std::size_t size() const { return counts_.size(); }
  double avg_length() const { return avg_len_; }
  double idf(const std::string& lowered_term) const;

 private:
  std::vector<TermCounts> counts_;
  std::vector<double> lengths_;
  std::unordered_map<std::string, double> idf_;
  double avg_len_ = 0.0;
};

/// Top min(k, |paragraphs|) by score; equal scores keep input order.
std::vector<RankedParagraph> rank_paragraphs(const std::vector<std::string>& question_tokens,
                                             const std::vector<corpus::Paragraph>& paragraphs,
                                             const RetrievalConfig& config);
std::vector<RankedParagraph> rank_paragraphs(const std::vector<std::string>& question_tokens,
                                             const std::vector<std::vector<std::string>>& paragraphs,
                                             const RetrievalConfig& config);

}  // namespace qna::retrieval
