#pragma once

#include <string>
#include <vector>

#include "qna/corpus.hpp"
#include "qna/qa_engine.hpp"
#include "qna/qg_engine.hpp"

namespace fixtures {

inline const std::string kText =
    "The Harrow Canal was opened in 1794 by Elsa Marrow. It carried coal from Dunmere to the coast. "
    "The Kellet Bridge crosses the canal near the old mill. A railway replaced most traffic in 1852.";

inline qna::bpe::Tokenizer tokenizer(const std::string& text = kText) {
  return qna::bpe::Tokenizer::train({text}, 200, {std::string(qna::corpus::kAnswerOpen),
                                                  std::string(qna::corpus::kAnswerClose)});
}

inline qna::ModelVocab vocab(const qna::bpe::Tokenizer& tok, const std::string& text = kText) {
  const std::vector<int> markers{tok.special_id(qna::corpus::kAnswerOpen), tok.special_id(qna::corpus::kAnswerClose)};
  std::vector<std::vector<int>> seqs{tok.encode(text)};
  for (const auto& w : qna::text::split_whitespace(text)) seqs.push_back(tok.encode(" " + w));
  return qna::ModelVocab::build(seqs, 1, markers);
}

inline qna::qa::QAModel random_qa(std::uint32_t seed, qna::qa::EncoderSpec spec = qna::qa::EncoderSpec::desk()) {
  auto tok = tokenizer();
  auto v = vocab(tok);
  return qna::qa::QAModel(spec, std::move(tok), std::move(v), seed);
}

inline qna::qg::QGModel random_qg(std::uint32_t seed, qna::qg::QGModelConfig cfg = qna::qg::QGModelConfig::desk()) {
  auto tok = tokenizer();
  auto v = vocab(tok);
  return qna::qg::QGModel(cfg, std::move(tok), std::move(v), seed);
}

}  // namespace fixtures
