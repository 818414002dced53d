#include "qna/candidates.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace qna::candidates {

std::string_view source_name(CandidateSource s) {
  switch (s) {
    case CandidateSource::Entity: return "entity";
    case CandidateSource::NounChunk: return "noun_chunk";
    case CandidateSource::DepSubtree: return "dep_subtree";
  }
  return "entity";
}

const std::vector<std::string>& sanctioned_labels() {
  static const std::vector<std::string> labels{"xcomp", "attr", "prep", "obj", "iobj", "flat",
                                               "fixed", "csubj", "ccomp", "acl", "conj"};
  return labels;
}

bool is_sanctioned_label(std::string_view label) {
  const auto& l = sanctioned_labels();
  return std::find(l.begin(), l.end(), label) != l.end();
}

std::vector<syntax::Sentence> segment_sentences(std::string_view text, syntax::SyntaxProvider& provider) {
  return provider.segment(text);
}

std::pair<std::size_t, std::size_t> subtree_extent(const std::vector<syntax::Arc>& arcs, std::size_t head) {
  const std::size_t n = arcs.size();
  std::vector<char> inside(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    // Walk up to the root; a cycle or the root ends the walk.
    std::size_t cur = i;
    for (std::size_t steps = 0; steps <= n; ++steps) {
      if (cur == head) {
        inside[i] = 1;
        break;
      }
      const int h = arcs[cur].head;
      if (h < 0) break;
      cur = static_cast<std::size_t>(h);
    }
  }
  std::size_t first = head, last = head;
  while (first > 0 && inside[first - 1]) --first;
  while (last + 1 < n && inside[last + 1]) ++last;
  return {first, last};
}

std::vector<CandidateSpan> extract_candidates(std::string_view sentence, syntax::SyntaxProvider& provider,
                                              const CandidateConfig& config, int sentence_index,
                                              Diagnostics* diagnostics) {
  syntax::Analysis a;
  try {
    a = provider.analyze(sentence);
  } catch (const std::exception& e) {
    if (diagnostics) diagnostics->warn("provider_failure", e.what());
    return {};
  }
  std::vector<CandidateSpan> out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  auto add = [&](std::size_t first, std::size_t last, CandidateSource src, std::optional<std::string> label) {
    if (first > last || last >= a.tokens.size()) return;
    const corpus::CharSpan span{a.tokens[first].begin, a.tokens[last].end};
    if (span.begin >= span.end || span.end > sentence.size()) return;
    if (!seen.insert({span.begin, span.end}).second) return;
    out.push_back({sentence_index, span, src, std::move(label)});
  };
  for (const auto& e : a.entities) add(e.first, e.last, CandidateSource::Entity, std::nullopt);
  for (const auto& c : a.noun_chunks) add(c.first, c.last, CandidateSource::NounChunk, std::nullopt);
  for (std::size_t i = 0; i < a.arcs.size(); ++i) {
    if (!is_sanctioned_label(a.arcs[i].label)) continue;
    const auto [first, last] = subtree_extent(a.arcs, i);
    add(first, last, CandidateSource::DepSubtree, a.arcs[i].label);
  }
  // Within each source, left to right.
  std::stable_sort(out.begin(), out.end(), [](const CandidateSpan& x, const CandidateSpan& y) {
    if (x.source != y.source) return x.source < y.source;
    return std::pair(x.span.begin, x.span.end) < std::pair(y.span.begin, y.span.end);
  });
  if (config.max_per_sentence > 0 && out.size() > config.max_per_sentence) {
    if (diagnostics) diagnostics->warn("candidates_capped", std::string(sentence));
    out.resize(config.max_per_sentence);
  }
  return out;
}

corpus::QGInput annotate(std::string_view sentence, const CandidateSpan& span, Diagnostics* diagnostics) {
  bool expanded = false;
  auto in = corpus::make_qg_input(sentence, span.span, span.sentence_index, &expanded);
  if (expanded && diagnostics) diagnostics->warn("span_expanded", std::string(sentence));
  return in;
}

}  // namespace qna::candidates
