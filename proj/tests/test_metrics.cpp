#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "qna/metrics.hpp"

using namespace qna;
using namespace qna::metrics;

namespace {

std::string random_text(std::mt19937& rng) {
  static const std::vector<std::string> parts{"The", "a", "an", "mill", " ", "  ", ",", ".", "'s", "river", "\t",
                                              "\xC3\x89t\xC3\xA9", "Anne", "theater", "-", "1874", "!"};
  std::string s;
  for (int i = 0, n = static_cast<int>(rng() % 10); i < n; ++i) s += parts[rng() % parts.size()];
  return s;
}

}  // namespace

TEST_CASE("official script fixture") {
  std::ifstream in(QNA_TEST_DATA "/metrics_pairs.json");
  const auto cases = nlohmann::json::parse(in);
  REQUIRE(cases.size() == 50);
  for (const auto& c : cases) {
    const auto pred = c["prediction"].get<std::string>();
    const auto golds = c["golds"].get<std::vector<std::string>>();
    INFO(pred);
    CHECK(compute_em(pred, golds) == c["em"].get<int>());
    CHECK(compute_f1(pred, golds) == doctest::Approx(c["f1"].get<double>()).epsilon(1e-12));
  }
}

TEST_CASE("normalization") {
  CHECK(normalize_answer("The  Quick, brown fox!") == "quick brown fox");
  CHECK(normalize_answer("theater an") == "theater");
  CHECK(normalize_answer("") == "");
  CHECK(answer_tokens("An apple a day") == std::vector<std::string>{"apple", "day"});
}

TEST_CASE("hand case") {
  CHECK(compute_em("Parliament of the United Kingdom", {"UK Parliament"}) == 0);
  CHECK(compute_f1("Parliament of the United Kingdom", {"UK Parliament"}) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("unanswerable conventions") {
  CHECK(compute_em("", {}) == 1);
  CHECK(compute_f1("", {""}) == 1.0);
  CHECK(compute_f1("x", {}) == 0.0);
  CHECK(compute_f1("", {"x"}) == 0.0);
  CHECK(compute_em("x", {"", "x"}) == 1);
}

TEST_CASE("score properties on random strings") {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = random_text(rng), b = random_text(rng);
    CHECK(normalize_answer(normalize_answer(a)) == normalize_answer(a));
    const double f = f1_pair(a, b);
    const int em = exact_pair(a, b);
    CHECK(f == doctest::Approx(f1_pair(b, a)).epsilon(1e-12));
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK((em == 0 || em == 1));
    if (em) CHECK(f == 1.0);
    CHECK(em <= f);
    if (!normalize_answer(a).empty() && !normalize_answer(b).empty()) {
      CHECK(fuzzy_match(a, b) == fuzzy_match(b, a));
      CHECK(fuzzy_match(a, a));
    }
  }
}

TEST_CASE("evaluate aggregates and counts missing predictions") {
  std::vector<corpus::QAExample> ex(3);
  ex[0].qid = "a";
  ex[0].is_answerable = true;
  ex[0].gold_answers = {{0, 0, 0, "Velden"}, {0, 0, 1, "Mara Velden"}};
  ex[1].qid = "b";
  ex[2].qid = "c";
  ex[2].is_answerable = true;
  ex[2].gold_answers = {{0, 0, 0, "river"}};
  const Predictions preds{{"a", "Mara Velden"}, {"b", ""}};
  const auto r = evaluate(ex, preds);
  CHECK(r.n_examples == 3);
  CHECK(r.n_missing == 1);
  CHECK(r.em == doctest::Approx(200.0 / 3.0));
  CHECK(r.f1 == doctest::Approx(200.0 / 3.0));
  CHECK(r.to_json(true)["per_example"].size() == 3);
}

TEST_CASE("prediction files round-trip") {
  const auto path = std::filesystem::temp_directory_path() / "qna_preds.json";
  const Predictions p{{"q1", "x"}, {"q2", ""}};
  save_predictions(p, path);
  CHECK(load_predictions(path) == p);
  std::filesystem::remove(path);
}
