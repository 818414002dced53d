#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qna/diagnostics.hpp"
#include "qna/syntax.hpp"
#include "qna/text.hpp"

namespace qna::corpus {

inline constexpr std::string_view kAnswerOpen = "<ANSWER>";
inline constexpr std::string_view kAnswerClose = "</ANSWER>";

/// Half-open byte range [begin, end).
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const CharSpan&) const = default;
};

struct Paragraph {
  std::string para_id;
  std::vector<std::string> tokens;
  std::string raw_text;
  std::vector<CharSpan> char_offsets;

  std::size_t size() const { return tokens.size(); }
  /// Original text covering tokens [first, last] inclusive.
  std::string span_text(std::size_t first, std::size_t last) const;
};

/// Tokenizes `raw_text` and records per-token offsets.
Paragraph make_paragraph(std::string para_id, std::string raw_text);

struct Document {
  std::string doc_id;
  std::optional<std::string> title;
  std::vector<Paragraph> paragraphs;
};

/// A gold answer as an inclusive token span inside one paragraph.
struct GoldAnswer {
  std::size_t paragraph = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string text;

  bool operator==(const GoldAnswer&) const = default;
};

struct QAExample {
  std::string qid;
  std::string question;
  std::string doc_id;
  std::vector<GoldAnswer> gold_answers;
  bool is_answerable = false;
};

/// One QG input sentence. `sentence_tokens` may contain a single
/// <ANSWER> ... </ANSWER> pair around the conditioning span.
struct QGInput {
  std::vector<std::string> sentence_tokens;
  int source_sentence_index = 0;
  std::optional<CharSpan> answer_char_span;
  std::string sentence;

  bool has_markers() const;
  /// Tokens joined by single spaces: the string fed to the QG tokenizer.
  std::string text() const;
  /// Text inside the markers, empty when unmarked.
  std::string answer_text() const;
};

struct QGExample {
  QGInput input;
  std::string question;

  std::vector<std::string> target_tokens() const;
};

// ---------------------------------------------------------------------------
// Answer markers

/// Wraps tokens [first, last] (inclusive) in answer markers.
std::vector<std::string> insert_markers(const std::vector<std::string>& tokens, std::size_t first,
                                        std::size_t last);
/// Removes marker tokens; the inverse of insert_markers.
std::vector<std::string> strip_markers(const std::vector<std::string>& tokens);

/// String form: s[0,b) + "<ANSWER> " + s[b,e) + " </ANSWER>" + s[e,n).
/// Throws std::invalid_argument if the span is out of bounds or empty, or if
/// the sentence already contains a marker string.
std::string insert_markers(std::string_view sentence, CharSpan span);
/// Inverse of the string form of insert_markers.
std::string strip_markers(std::string_view marked);

/// Builds a marked QGInput, expanding `span` outward to token boundaries.
/// `expanded` (optional) reports whether the span had to grow.
QGInput make_qg_input(std::string_view sentence, CharSpan span, int sentence_index,
                      bool* expanded = nullptr);
/// Unmarked input for a sentence.
QGInput make_unmarked_input(std::string_view sentence, int sentence_index);

// ---------------------------------------------------------------------------
// Chunking

/// Splits a token list into contiguous non-overlapping chunks of `chunk_size`
/// tokens (the last may be shorter). Raw text of each chunk is the tokens
/// joined by single spaces.
std::vector<Paragraph> chunk_document(const std::vector<std::string>& tokens,
                                      std::size_t chunk_size,
                                      std::string_view id_prefix = "p");

/// Chunks tokenized source text, keeping the original text of each chunk.
std::vector<Paragraph> chunk_document(std::string_view raw_text,
                                      const std::vector<text::Token>& tokens,
                                      std::size_t chunk_size, std::string_view id_prefix = "p");

/// Convenience: tokenize then chunk.
Document document_from_text(std::string doc_id, std::string_view raw_text, std::size_t chunk_size);

// ---------------------------------------------------------------------------
// Loaders

enum class SquadVersion { V1AnswerableOnly, V2WithUnanswerable };

struct Dataset {
  std::vector<Document> documents;
  std::vector<QAExample> examples;
  Diagnostics diagnostics;

  const Document* find_document(std::string_view doc_id) const;
};

/// Public SQuAD JSON layout: data -> paragraphs -> qas.
Dataset load_squad_format(const std::filesystem::path& path, SquadVersion version);
Dataset parse_squad_json(std::string_view json_text, SquadVersion version);

struct NewsQAOptions {
  std::size_t chunk_size = 300;
  /// When set, keep only stories whose "type" field equals this value.
  std::optional<std::string> split;
  bool answerable_only = false;
};

/// NewsQA combined JSON (data -> [{storyId, text, type, questions: [{q, consensus}]}]).
Dataset load_newsqa_json(const std::filesystem::path& path, const NewsQAOptions& options);
Dataset parse_newsqa_json(std::string_view json_text, const NewsQAOptions& options);
/// NewsQA CSV (story_id, story_text, question, answer_token_ranges).
Dataset load_newsqa_csv(const std::filesystem::path& path, const NewsQAOptions& options);
Dataset parse_newsqa_csv(std::string_view csv_text, const NewsQAOptions& options);

/// Merges datasets, keeping document ids unique by prefixing on collision.
Dataset concat(std::vector<Dataset> parts);

/// Carves a validation split off the end of `train` (deterministic shuffle by seed).
std::pair<Dataset, Dataset> split_validation(const Dataset& train, double val_fraction,
                                             unsigned seed);

struct QGDerivation {
  std::vector<QGExample> examples;
  /// Paragraph text the example came from, index-aligned with `examples`.
  std::vector<std::string> paragraphs;
  Diagnostics diagnostics;
};

/// One marked sentence-question pair per answerable example, using the
/// provider's sentence segmentation.
QGDerivation derive_qg_examples(const std::vector<Document>& documents,
                                const std::vector<QAExample>& examples,
                                syntax::SyntaxProvider& provider);

/// JSON Lines: {"sentence", "question", "answer_text", "answer_char_start"}.
std::vector<QGExample> load_augmentation(const std::filesystem::path& path,
                                         Diagnostics* diagnostics = nullptr);
std::vector<QGExample> parse_augmentation(std::string_view jsonl,
                                          Diagnostics* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Processed-example cache (JSON Lines)

void save_qg_cache(const std::filesystem::path& path, const std::vector<QGExample>& examples);
std::vector<QGExample> load_qg_cache(const std::filesystem::path& path);
void save_qa_cache(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_qa_cache(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

}  // namespace qna::corpus
