#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qna/corpus.hpp"

namespace qna::metrics {

/// SQuAD evaluation normalization: lowercase, drop ASCII punctuation, drop
/// the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view s);
std::vector<std::string> answer_tokens(std::string_view s);

/// Single-reference scores with the official conventions: an empty side
/// scores 1 only when both sides are empty.
int exact_pair(std::string_view pred, std::string_view gold);
double f1_pair(std::string_view pred, std::string_view gold);

/// Max over golds. Golds that normalize to empty are ignored; if none are
/// left the example is unanswerable and only an empty prediction scores.
int compute_em(std::string_view pred, const std::vector<std::string>& golds);
double compute_f1(std::string_view pred, const std::vector<std::string>& golds);

/// True iff the normalized token sets share at least one token.
bool fuzzy_match(std::string_view pred, std::string_view gold);

struct ExampleScore {
  std::string qid;
  std::string prediction;
  int em = 0;
  double f1 = 0.0;
};

struct EvalReport {
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  std::size_t n_examples = 0;
  std::size_t n_missing = 0;
  std::vector<ExampleScore> per_example;

  nlohmann::json to_json(bool with_examples = false) const;
};

using Predictions = std::map<std::string, std::string>;

/// Missing predictions count as the empty (no-answer) prediction.
EvalReport evaluate(const std::vector<corpus::QAExample>& examples, const Predictions& predictions);

Predictions load_predictions(const std::filesystem::path& path);
void save_predictions(const Predictions& predictions, const std::filesystem::path& path);

}  // namespace qna::metrics
