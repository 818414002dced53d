#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qna/corpus.hpp"
#include "qna/diagnostics.hpp"
#include "qna/syntax.hpp"

namespace qna::candidates {

enum class CandidateSource { Entity, NounChunk, DepSubtree };

std::string_view source_name(CandidateSource s);

struct CandidateSpan {
  int sentence_index = 0;
  corpus::CharSpan span;
  CandidateSource source = CandidateSource::Entity;
  std::optional<std::string> dep_label;  // set iff source == DepSubtree

  bool operator==(const CandidateSpan&) const = default;
};

/// Incoming relation labels whose subtrees become candidates.
const std::vector<std::string>& sanctioned_labels();
bool is_sanctioned_label(std::string_view label);

struct CandidateConfig {
  /// Per-sentence cap, applied by source priority then left to right; 0 = none.
  std::size_t max_per_sentence = 12;
};

std::vector<syntax::Sentence> segment_sentences(std::string_view text, syntax::SyntaxProvider& provider);

/// Entities, then noun chunks, then sanctioned dependency subtrees; a span
/// proposed twice keeps its first source. Provider errors yield an empty list
/// and a "provider_failure" warning.
std::vector<CandidateSpan> extract_candidates(std::string_view sentence, syntax::SyntaxProvider& provider,
                                              const CandidateConfig& config = {}, int sentence_index = 0,
                                              Diagnostics* diagnostics = nullptr);

/// Contiguous extent of the subtree under `head`: the maximal run of
/// descendant tokens around the head. Returns inclusive token indices.
std::pair<std::size_t, std::size_t> subtree_extent(const std::vector<syntax::Arc>& arcs, std::size_t head);

/// Marks `span` in `sentence`. A span splitting a token is widened to token
/// boundaries and counted as "span_expanded". Throws std::invalid_argument for
/// an empty or out-of-range span.
corpus::QGInput annotate(std::string_view sentence, const CandidateSpan& span, Diagnostics* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Providers

/// Deterministic rule and lexicon based analysis for English.
class DeskProvider : public syntax::SyntaxProvider {
 public:
  std::string name() const override { return "desk"; }
  std::string version() const override { return "desk-1"; }
  std::vector<syntax::Sentence> segment(std::string_view text) override;
  syntax::Analysis analyze(std::string_view sentence) override;
};

/// Talks JSON lines to a child process (one request per line, one response
/// per line). Requests: {"op":"segment","text":...} and
/// {"op":"analyze","sentence":...}; {"op":"version"} for the version string.
class ExternalProvider : public syntax::SyntaxProvider {
 public:
  explicit ExternalProvider(std::vector<std::string> command);
  ~ExternalProvider() override;
  ExternalProvider(const ExternalProvider&) = delete;
  ExternalProvider& operator=(const ExternalProvider&) = delete;

  std::string name() const override { return "production"; }
  std::string version() const override;
  std::vector<syntax::Sentence> segment(std::string_view text) override;
  syntax::Analysis analyze(std::string_view sentence) override;

 private:
  struct Process;
  nlohmann::json request(const nlohmann::json& req);
  std::vector<std::string> command_;
  std::unique_ptr<Process> proc_;
  mutable std::string version_;
};

/// Analysis <-> JSON, the wire format of ExternalProvider.
nlohmann::json analysis_to_json(const syntax::Analysis& a);
syntax::Analysis analysis_from_json(const nlohmann::json& j);
std::optional<syntax::EntityType> parse_entity_type(std::string_view name);

/// Serves the ExternalProvider protocol on the given streams until EOF.
void serve_provider(syntax::SyntaxProvider& provider, std::istream& in, std::ostream& out);

using ProviderFactory = std::function<std::unique_ptr<syntax::SyntaxProvider>()>;

/// Registers a named provider; built in: "desk" and "production". The
/// production provider runs $QNA_SYNTAX_CMD (default
/// "python3 tools/spacy_syntax.py").
void register_provider(const std::string& name, ProviderFactory factory);
std::unique_ptr<syntax::SyntaxProvider> make_provider(const std::string& name);
std::vector<std::string> provider_names();

}  // namespace qna::candidates
