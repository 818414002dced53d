#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qna/candidates.hpp"
#include "qna/diagnostics.hpp"
#include "qna/qa_engine.hpp"
#include "qna/qg_engine.hpp"
#include "qna/syntax.hpp"

namespace qna::pipeline {

struct QAPairItem {
  std::string question;
  std::string answer;
  int source_sentence_index = 0;
  double qg_log_prob = 0.0;
  double qa_score = 0.0;

  bool operator==(const QAPairItem&) const = default;
};

nlohmann::json item_to_json(const QAPairItem& item);
QAPairItem item_from_json(const nlohmann::json& j);
/// Catalog file layout: a JSON array of items.
nlohmann::json catalog_to_json(const std::vector<QAPairItem>& items);
std::vector<QAPairItem> catalog_from_json(const nlohmann::json& j);

enum class OverlapMeasure { Coefficient, Jaccard };

struct FilterConfig {
  /// Inclusive: an overlap equal to the threshold is redundant.
  double overlap_threshold = 0.6;
  OverlapMeasure measure = OverlapMeasure::Coefficient;
  /// Also drop an item whose question overlaps its own answer.
  bool self_redundancy_guard = true;

  void validate() const;
};

/// Sentences index-1 .. index+1 (clamped), joined by single spaces.
std::string build_context_window(const std::vector<std::string>& sentences, std::size_t index);

/// Normalized token sets: |A ∩ B| / min(|A|, |B|), or |A ∩ B| / |A ∪ B| for
/// Jaccard. 0 when either set is empty.
double token_overlap(std::string_view a, std::string_view b,
                     OverlapMeasure measure = OverlapMeasure::Coefficient);

/// True when the two items may not both survive.
bool redundant_pair(const QAPairItem& a, const QAPairItem& b, const FilterConfig& config);
bool self_redundant(const QAPairItem& item, const FilterConfig& config);

/// Greedy elimination: items are visited by descending qg_log_prob (ties:
/// earlier sentence, then smaller question, then input position) and kept
/// unless redundant with an already kept item. Survivors keep input order.
std::vector<QAPairItem> filter_items(const std::vector<QAPairItem>& items, const FilterConfig& config = {});

struct CatalogConfig {
  FilterConfig filter;
  qg::BeamConfig beam;
  candidates::CandidateConfig candidates;
  qa::DecodeConfig decode;
};

struct CatalogResult {
  std::vector<QAPairItem> items;
  Diagnostics diagnostics;
  std::size_t sentences = 0;
  std::size_t sentences_failed = 0;
  std::size_t generated = 0;   // questions produced before QA and filtering
  std::size_t unanswerable = 0;
};

/// Document -> filtered Q&A items. A sentence whose processing throws is
/// skipped and counted as "sentence_failed".
CatalogResult generate_catalog(std::string_view text, const qg::QGModel& qg_model, const qa::QAModel& qa_model,
                               syntax::SyntaxProvider& provider, const CatalogConfig& config = {});

struct QAonQGReport {
  double mean_f1 = 0.0;
  std::size_t n = 0;
  std::size_t failures = 0;
  std::vector<double> per_example;
  std::vector<std::string> questions;
};

/// Generates one question per example, answers it against the example's
/// paragraph and scores the answer against the conditioning span with F1.
/// `paragraphs` is index-aligned with `examples`. Failures score 0.
QAonQGReport qa_on_qg_score(const qg::QGModel& qg_model, const qa::QAModel& qa_model,
                            const std::vector<corpus::QGExample>& examples,
                            const std::vector<std::string>& paragraphs, const qg::BeamConfig& beam = {},
                            Diagnostics* diagnostics = nullptr);

}  // namespace qna::pipeline
