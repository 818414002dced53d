#include <doctest.h>

#include <random>
#include <set>

#include "qna/candidates.hpp"
#include "qna/pipeline.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace qna;
using namespace qna::pipeline;

namespace {

QAPairItem item(std::string q, std::string a, double lp, int sentence = 0) {
  return {std::move(q), std::move(a), sentence, lp, 0.5};
}

}  // namespace

TEST_CASE("context window clamps at the edges") {
  const std::vector<std::string> s{"A one.", "B two.", "C three.", "D four."};
  CHECK(build_context_window(s, 0) == "A one. B two.");
  CHECK(build_context_window(s, 1) == "A one. B two. C three.");
  CHECK(build_context_window(s, 3) == "C three. D four.");
  CHECK(build_context_window({"Only."}, 0) == "Only.");
  CHECK_THROWS(build_context_window(s, 4));
}

TEST_CASE("token overlap") {
  CHECK(token_overlap("the mill river", "a mill by the river") == doctest::Approx(1.0));
  CHECK(token_overlap("mill river stone", "mill bridge", OverlapMeasure::Coefficient) == doctest::Approx(0.5));
  CHECK(token_overlap("mill river stone", "mill bridge", OverlapMeasure::Jaccard) == doctest::Approx(0.25));
  CHECK(token_overlap("", "mill") == 0.0);
  CHECK(token_overlap("the a an", "mill") == 0.0);
  std::mt19937 rng(5);
  for (int t = 0; t < 300; ++t) {
    const auto items = oracle::random_items(rng, 2);
    if (items.size() < 2) continue;
    const auto a = items[0].question + " " + items[0].answer;
    const auto b = items[1].question + " " + items[1].answer;
    CHECK(token_overlap(a, b) == doctest::Approx(oracle::overlap_coefficient(a, b)).epsilon(1e-12));
    CHECK(token_overlap(a, b) == token_overlap(b, a));
  }
}

TEST_CASE("threshold is inclusive") {
  FilterConfig cfg;
  // 3 of 5 shared tokens on the smaller side: exactly 0.6.
  const auto a = item("alpha beta gamma delta?", "epsilon", -1);
  const auto b = item("alpha beta gamma zeta eta theta?", "iota", -2);
  CHECK(token_overlap(a.question + " " + a.answer, b.question + " " + b.answer) == doctest::Approx(0.6));
  CHECK(redundant_pair(a, b, cfg));
  CHECK(filter_items({a, b}, cfg) == std::vector<QAPairItem>{a});
  cfg.overlap_threshold = 0.61;
  CHECK_FALSE(redundant_pair(a, b, cfg));
  CHECK(filter_items({a, b}, cfg).size() == 2);
}

TEST_CASE("duplicate questions or answers are always redundant") {
  FilterConfig cfg;
  cfg.overlap_threshold = 1.0;
  CHECK(redundant_pair(item("Who built it?", "Marrow", -1), item("who built it", "the canal company", -2), cfg));
  CHECK(redundant_pair(item("Who built it?", "Elsa Marrow", -1), item("When was it dug?", "elsa marrow.", -2), cfg));
}

TEST_CASE("self redundancy guard") {
  FilterConfig cfg;
  const auto echo = item("Was the mill built of stone?", "mill built of stone", -0.1);
  CHECK(self_redundant(echo, cfg));
  const auto other = item("What was the mill made of?", "stone", -3);
  CHECK(filter_items({echo, other}, cfg) == std::vector<QAPairItem>{other});
  cfg.self_redundancy_guard = false;
  CHECK(filter_items({echo, other}, cfg) == std::vector<QAPairItem>{echo});
}

TEST_CASE("filter config validation") {
  FilterConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.overlap_threshold = 1.5;
  CHECK_THROWS(cfg.validate());
  cfg.overlap_threshold = -0.1;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("filter matches the exhaustive oracle") {
  std::mt19937 rng(99);
  for (int t = 0; t < 400; ++t) {
    const auto items = oracle::random_items(rng, 10);
    const bool guard = t % 2 == 0;
    FilterConfig cfg;
    cfg.self_redundancy_guard = guard;
    CHECK(filter_items(items, cfg) == oracle::filter(items, 0.6, guard));
  }
}

TEST_CASE("filter properties") {
  std::mt19937 rng(17);
  FilterConfig cfg;
  for (int t = 0; t < 500; ++t) {
    const auto items = oracle::random_items(rng, 12);
    const auto kept = filter_items(items, cfg);
    CHECK(filter_items(kept, cfg) == kept);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      CHECK_FALSE(self_redundant(kept[i], cfg));
      for (std::size_t j = i + 1; j < kept.size(); ++j) CHECK_FALSE(redundant_pair(kept[i], kept[j], cfg));
    }
    // Survivors keep input order.
    std::size_t pos = 0;
    for (const auto& k : kept) {
      while (pos < items.size() && !(items[pos] == k)) ++pos;
      CHECK(pos < items.size());
      ++pos;
    }
    // Maximal: every dropped item conflicts with a survivor or itself.
    for (const auto& it : items) {
      if (std::find(kept.begin(), kept.end(), it) != kept.end()) continue;
      bool blocked = self_redundant(it, cfg);
      for (const auto& k : kept) blocked = blocked || redundant_pair(it, k, cfg);
      CHECK(blocked);
    }
    // The best non-self-redundant item always survives.
    const QAPairItem* top = nullptr;
    for (const auto& it : items) {
      if (self_redundant(it, cfg)) continue;
      if (!top || it.qg_log_prob > top->qg_log_prob ||
          (it.qg_log_prob == top->qg_log_prob && (it.source_sentence_index < top->source_sentence_index ||
                                                  (it.source_sentence_index == top->source_sentence_index &&
                                                   it.question < top->question))))
        top = &it;
    }
    if (top) CHECK(std::find(kept.begin(), kept.end(), *top) != kept.end());
  }
}

TEST_CASE("raising a score can evict an item that survived before") {
  // A conflicts with B, B with C. Greedy keeps A and C. Lifting B above A
  // keeps B and drops both neighbours.
  FilterConfig cfg;
  auto a = item("Who dug the canal?", "Elsa Marrow", -1);
  auto b = item("Who dug canal coal?", "navvies", -2);
  auto c = item("Which navvies moved coal?", "canal", -3);
  REQUIRE(redundant_pair(a, b, cfg));
  REQUIRE(redundant_pair(b, c, cfg));
  REQUIRE_FALSE(redundant_pair(a, c, cfg));
  CHECK(filter_items({a, b, c}, cfg) == std::vector<QAPairItem>{a, c});
  b.qg_log_prob = -0.5;
  CHECK(filter_items({a, b, c}, cfg) == std::vector<QAPairItem>{b});
}

TEST_CASE("tie-breaking") {
  FilterConfig cfg;
  const auto a = item("Who dug it?", "Marrow", -1, 2);
  const auto b = item("Who dug it?", "Kellet", -1, 1);
  CHECK(filter_items({a, b}, cfg) == std::vector<QAPairItem>{b});
  const auto c = item("Who dug it ?", "Kellet", -1, 1);
  const auto d = item("Who dug it?", "Marrow", -1, 1);
  CHECK(filter_items({c, d}, cfg) == std::vector<QAPairItem>{c});
  CHECK(filter_items({d, c}, cfg) == std::vector<QAPairItem>{c});
}

TEST_CASE("item json") {
  const auto it = item("Who dug it?", "Marrow", -1.25, 3);
  CHECK(item_from_json(item_to_json(it)) == it);
  const auto j = item_to_json(it);
  for (const char* k : {"question", "answer", "sentence_index", "qg_log_prob", "qa_score"}) CHECK(j.contains(k));
  CHECK(catalog_from_json(catalog_to_json({it, it})).size() == 2);
  auto bad = j;
  bad.erase("answer");
  CHECK_THROWS(item_from_json(bad));
}

TEST_CASE("catalog on random models") {
  auto qg = fixtures::random_qg(3);
  auto qa = fixtures::random_qa(4);
  candidates::DeskProvider provider;
  CatalogConfig cfg;
  cfg.beam.beam_size = 2;
  cfg.beam.max_decode_len = 12;
  const auto r1 = generate_catalog(fixtures::kText, qg, qa, provider, cfg);
  const auto r2 = generate_catalog(fixtures::kText, qg, qa, provider, cfg);
  CHECK(r1.items == r2.items);
  CHECK(r1.sentences == 4);
  CHECK(r1.sentences_failed == 0);
  CHECK(r1.items.size() <= r1.generated - r1.unanswerable);

  std::vector<std::string> sentences;
  for (const auto& s : provider.segment(fixtures::kText)) sentences.push_back(s.text);
  std::set<std::string> qs, as;
  for (const auto& it : r1.items) {
    REQUIRE(it.source_sentence_index >= 0);
    REQUIRE(static_cast<std::size_t>(it.source_sentence_index) < sentences.size());
    const auto window = build_context_window(sentences, static_cast<std::size_t>(it.source_sentence_index));
    CHECK(window.find(it.answer) != std::string::npos);
    CHECK(qs.insert(metrics::normalize_answer(it.question)).second);
    CHECK(as.insert(metrics::normalize_answer(it.answer)).second);
    CHECK(it.qa_score <= 0.0);
    CHECK(it.qg_log_prob <= 0.0);
  }
}

TEST_CASE("catalog of empty text") {
  auto qg = fixtures::random_qg(3);
  auto qa = fixtures::random_qa(4);
  candidates::DeskProvider provider;
  const auto r = generate_catalog("   ", qg, qa, provider);
  CHECK(r.items.empty());
  CHECK(r.sentences == 0);
}

TEST_CASE("qa on qg scoring") {
  auto qg = fixtures::random_qg(3);
  auto qa = fixtures::random_qa(4);
  const auto examples = corpus::parse_augmentation(
      R"({"sentence": "The Harrow Canal was opened in 1794 by Elsa Marrow .", "answer_text": "1794", )"
      R"("answer_char_start": 31, "question": "When was the canal opened ?"})");
  REQUIRE(examples.size() == 1);
  qg::BeamConfig beam;
  beam.beam_size = 1;
  beam.max_decode_len = 10;
  const auto r = qa_on_qg_score(qg, qa, examples, {examples[0].input.sentence}, beam);
  CHECK(r.n == 1);
  CHECK(r.per_example.size() == 1);
  CHECK(r.mean_f1 >= 0.0);
  CHECK(r.mean_f1 <= 1.0);
  CHECK_THROWS(qa_on_qg_score(qg, qa, examples, {}, beam));
  CHECK(qa_on_qg_score(qg, qa, {}, {}, beam).mean_f1 == 0.0);
}
