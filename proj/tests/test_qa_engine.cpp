#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "qna/metrics.hpp"
#include "qna/qa_engine.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace qna;
using namespace qna::qa;

namespace {

LogitGroups random_groups(std::mt19937& rng, std::size_t max_groups = 5, std::size_t max_len = 32,
                          bool coarse = false) {
  std::normal_distribution<double> z(0.0, 2.0);
  LogitGroups g(1 + rng() % max_groups);
  for (auto& row : g) {
    row.resize(1 + rng() % max_len);
    for (auto& v : row) v = coarse ? std::round(z(rng)) : z(rng);
  }
  return g;
}

std::vector<GoldPosition> random_gold(std::mt19937& rng, const LogitGroups& g) {
  std::vector<GoldPosition> gold;
  const std::size_t n = rng() % 3;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = rng() % g.size();
    const std::size_t s = rng() % g[p].size();
    const std::size_t e = s + rng() % (g[p].size() - s);
    gold.push_back({p, s, e});
  }
  return gold;
}

double reference_loss(const LogitGroups& start, const LogitGroups& end, const std::vector<GoldPosition>& gold) {
  const auto ps = oracle::shared_softmax(start), pe = oracle::shared_softmax(end);
  std::set<std::pair<std::size_t, std::size_t>> s, e;
  for (const auto& g : gold) {
    s.emplace(g.paragraph, g.start);
    e.emplace(g.paragraph, g.end);
  }
  if (gold.empty())
    for (std::size_t p = 0; p < start.size(); ++p) {
      s.emplace(p, 0);
      e.emplace(p, 0);
    }
  long double ms = 0, me = 0;
  for (const auto& [p, i] : s) ms += ps[p][i];
  for (const auto& [p, i] : e) me += pe[p][i];
  return static_cast<double>(-std::log(ms) - std::log(me));
}

}  // namespace

TEST_CASE("shared normalization sums to one and ignores shifts") {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto g = random_groups(rng);
    const auto p = shared_norm_probs(g);
    const auto ref = oracle::shared_softmax(g);
    double total = 0;
    auto shifted = g;
    const double c = std::normal_distribution<double>(0, 50)(rng);
    for (auto& row : shifted)
      for (auto& v : row) v += c;
    const auto q = shared_norm_probs(shifted);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[i].size(); ++j) {
        total += p[i][j];
        CHECK(std::abs(p[i][j] - ref[i][j]) < 1e-12);
        CHECK(std::abs(p[i][j] - q[i][j]) < 1e-6);
      }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("shared normalization rejects empty and non-finite input") {
  CHECK_THROWS_AS(shared_norm_probs({{}, {}}), std::invalid_argument);
  CHECK_THROWS_AS(shared_norm_probs({{1.0, NAN}}), std::invalid_argument);
  CHECK(shared_norm_probs({{}, {0.0}})[1][0] == 1.0);
}

TEST_CASE("loss matches the reference and its gradient matches finite differences") {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_groups(rng, 3, 8);
    auto e = s;
    for (auto& row : e)
      for (auto& v : row) v = std::normal_distribution<double>(0, 2)(rng);
    const auto gold = random_gold(rng, s);
    const auto res = shared_norm_loss(s, e, gold);
    CHECK(res.loss == doctest::Approx(reference_loss(s, e, gold)).epsilon(1e-9));
    CHECK(res.loss >= 0.0);
    const double h = 1e-5;
    for (std::size_t p = 0; p < s.size(); ++p)
      for (std::size_t i = 0; i < s[p].size(); ++i) {
        auto up = s, down = s;
        up[p][i] += h;
        down[p][i] -= h;
        const double num = (shared_norm_loss(up, e, gold).loss - shared_norm_loss(down, e, gold).loss) / (2 * h);
        CHECK(std::abs(num - res.start_grad[p][i]) <= 1e-4 * std::max(1.0, std::abs(num)));
        auto eu = e, ed = e;
        eu[p][i] += h;
        ed[p][i] -= h;
        const double nume = (shared_norm_loss(s, eu, gold).loss - shared_norm_loss(s, ed, gold).loss) / (2 * h);
        CHECK(std::abs(nume - res.end_grad[p][i]) <= 1e-4 * std::max(1.0, std::abs(nume)));
      }
  }
}

TEST_CASE("loss is zero exactly when gold holds all mass") {
  CHECK(shared_norm_loss({{3.0}}, {{-1.0}}, {}).loss == 0.0);
  CHECK(shared_norm_loss({{0.0, 1.0}}, {{0.0, 1.0}}, {{0, 0, 1}, {0, 1, 0}}).loss == doctest::Approx(0.0));
  CHECK(shared_norm_loss({{0.0, 1.0}}, {{0.0, 1.0}}, {{0, 1, 1}}).loss > 0.0);
}

TEST_CASE("unanswerable gold uses every sentinel") {
  const LogitGroups s{{0.5, 1.0}, {0.2, -1.0, 0.0}};
  const auto r = shared_norm_loss(s, s, {});
  CHECK(r.loss == doctest::Approx(reference_loss(s, s, {})));
  CHECK_FALSE(r.fell_back);
}

TEST_CASE("gold outside the encoded range falls back to the sentinel") {
  const LogitGroups s{{0.5, 1.0}};
  const auto r = shared_norm_loss(s, s, {{0, 1, 5}, {3, 0, 0}});
  CHECK(r.dropped == 2);
  CHECK(r.fell_back);
  CHECK(r.loss == doctest::Approx(shared_norm_loss(s, s, {}).loss));
  const auto partial = shared_norm_loss(s, s, {{0, 1, 1}, {0, 1, 9}});
  CHECK(partial.dropped == 1);
  CHECK_FALSE(partial.fell_back);
}

TEST_CASE("span selection agrees with exhaustive enumeration") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const bool coarse = trial % 2;
    const auto s = random_groups(rng, 3, 17, coarse);
    LogitGroups e = s;
    for (auto& row : e)
      for (auto& v : row) v = coarse ? std::round(std::normal_distribution<double>(0, 2)(rng))
                                     : std::normal_distribution<double>(0, 2)(rng);
    const std::size_t max_len = 1 + rng() % 6;
    const auto ps = shared_norm_probs(s), pe = shared_norm_probs(e);
    const auto got = select_span(ps, pe, max_len);
    const auto want = oracle::best_span(ps, pe, max_len);
    CHECK(got.answerable == want.answerable);
    CHECK(got.paragraph == want.paragraph);
    CHECK(got.start == want.start);
    CHECK(got.end == want.end);
    CHECK(got.prob == want.prob);
    if (got.answerable) {
      CHECK(got.end != 0);
      CHECK(got.start <= got.end);
      CHECK(got.end - got.start + 1 <= max_len);
    } else {
      CHECK(got.start == 0);
      CHECK(got.end == 0);
    }
  }
}

TEST_CASE("ties go to the earliest paragraph and span") {
  const LogitGroups p{{0.1, 0.2, 0.2}, {0.1, 0.2, 0.2}};
  const auto c = select_span(p, p, 30);
  CHECK(c.paragraph == 0);
  CHECK(c.start == 1);
  CHECK(c.end == 1);
}

TEST_CASE("presets") {
  const auto base = EncoderSpec::base();
  CHECK(base.layers == 12);
  CHECK(base.hidden_dim == 768);
  CHECK(base.heads == 12);
  CHECK(base.max_sequence_len == 384);
  CHECK(EncoderSpec::desk().layers == 2);
  CHECK(EncoderSpec::desk().hidden_dim == 64);
  CHECK_THROWS_AS(EncoderSpec::preset_named("huge"), ConfigError);
  auto bad = EncoderSpec::desk();
  bad.heads = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(EncoderSpec::from_json(base.to_json()).to_json() == base.to_json());
  const auto paper = QATrainConfig::paper();
  CHECK(paper.k_train == 4);
  CHECK(paper.lr == 3e-5);
  QATrainConfig zero;
  zero.epochs = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);
}

TEST_CASE("packing truncates the paragraph to the sequence budget") {
  auto spec = EncoderSpec::desk();
  spec.max_sequence_len = 12;
  const auto m = fixtures::random_qa(1, spec);
  const auto para = corpus::make_paragraph("p", fixtures::kText);
  const auto enc = m.encode_paragraph(para);
  CHECK(enc.ids.size() == enc.word.size());
  const auto q = m.encode_question("When?");
  const auto packed = m.pack(q, enc);
  CHECK(packed.ids.size() == 12);
  CHECK(packed.paragraph_offset == q.size() + 2);
  CHECK(packed.paragraph_pieces == 12 - q.size() - 3);
  CHECK(packed.ids.front() == ModelVocab::kCls);
  CHECK(packed.ids.back() == ModelVocab::kSep);
  std::vector<int> long_q(20, ModelVocab::kUnk);
  CHECK_THROWS_AS(m.pack(long_q, enc), std::invalid_argument);
}

TEST_CASE("forward yields one sentinel row plus one row per piece") {
  const auto m = fixtures::random_qa(2);
  const auto para = corpus::make_paragraph("p", "The canal opened in 1794.");
  const auto packed = m.pack(m.encode_question("When?"), m.encode_paragraph(para));
  nn::Rng rng(0);
  const auto out = m.forward(packed, false, rng);
  CHECK(out.rows() == static_cast<Eigen::Index>(1 + packed.paragraph_pieces));
  CHECK(out.cols() == 2);
}

TEST_CASE("predictions respect sentinel exclusivity and come from the paragraph") {
  const auto doc = corpus::document_from_text("d", fixtures::kText, 12);
  for (std::uint32_t seed = 1; seed <= 8; ++seed) {
    const auto m = fixtures::random_qa(seed);
    for (const std::string q : {"When was the canal opened?", "Who opened it?", "What crosses the canal?"}) {
      const auto p = m.predict(q, doc, {});
      CHECK(p.scores.start_logits.size() == std::min<std::size_t>(4, doc.paragraphs.size()));
      if (p.answerable) {
        CHECK(p.end_piece != 0);
        CHECK(p.start_piece <= p.end_piece);
        CHECK(p.end_piece - p.start_piece + 1 <= 30);
        CHECK(p.start_token <= p.end_token);
        CHECK(doc.paragraphs[p.paragraph].raw_text.find(p.answer_text) != std::string::npos);
        CHECK_FALSE(p.answer_text.empty());
      } else {
        CHECK(p.answer_text.empty());
        CHECK(p.end_piece == 0);
      }
      CHECK(p.score <= 0.0);
    }
  }
}

TEST_CASE("predict agrees with enumeration over its own scores") {
  const auto doc = corpus::document_from_text("d", fixtures::kText, 9);
  for (std::uint32_t seed = 1; seed <= 6; ++seed) {
    const auto m = fixtures::random_qa(seed);
    const auto p = m.predict("Where did the coal go?", doc, {}, {5});
    const auto want = oracle::best_span(shared_norm_probs(p.scores.start_logits), shared_norm_probs(p.scores.end_logits), 5);
    CHECK(p.answerable == want.answerable);
    if (p.answerable) {
      CHECK(p.scores.paragraphs[want.paragraph] == p.paragraph);
      CHECK(p.start_piece == want.start);
      CHECK(p.end_piece == want.end);
    }
  }
}

TEST_CASE("checkpoint round-trip preserves predictions") {
  const auto m = fixtures::random_qa(5);
  const auto path = std::filesystem::temp_directory_path() / "qna_qa_rt.ckpt";
  m.save(path);
  const auto back = QAModel::load(path);
  const auto doc = corpus::document_from_text("d", fixtures::kText, 10);
  const auto a = m.predict("Who opened the canal?", doc, {});
  const auto b = back.predict("Who opened the canal?", doc, {});
  CHECK(a.answer_text == b.answer_text);
  CHECK(a.score == b.score);
  const QAModel copy(m);
  CHECK(copy.predict("Who opened the canal?", doc, {}).score == a.score);
  std::filesystem::remove(path);
  auto ar = m.to_archive();
  ar.header["kind"] = "qg";
  CHECK_THROWS_AS(QAModel::from_archive(ar), ParseError);
}

TEST_CASE("training lowers the loss and records history") {
  auto ds = corpus::load_squad_format(QNA_TEST_DATA "/qa_overfit.json", corpus::SquadVersion::V2WithUnanswerable);
  corpus::Dataset small;
  small.documents = ds.documents;
  small.examples.assign(ds.examples.begin(), ds.examples.begin() + 10);
  QATrainConfig cfg;
  cfg.epochs = 4;
  cfg.lr = 1e-3;
  cfg.batch_size = 4;
  cfg.bpe_merges = 200;
  cfg.dropout = 0.0f;
  int calls = 0;
  const auto r = train_qa(small, &small, cfg, EncoderSpec::desk(), std::nullopt, [&](int, const QAModel&) {
    ++calls;
    return true;
  });
  CHECK(calls == 4);
  REQUIRE(r.train_loss.size() == 4);
  CHECK(r.train_loss.back() < r.train_loss.front());
  CHECK(r.history.size() == 4);
  CHECK(r.model.metadata["history"].size() == 4);
  CHECK(dataset_loss(r.model, small, 4) == doctest::Approx(r.history.back().best_so_far).epsilon(1e-4));

  corpus::Dataset empty;
  CHECK_THROWS_AS(train_qa(empty, nullptr, cfg, EncoderSpec::desk()), ConfigError);
}

TEST_CASE("callback can stop training early") {
  auto ds = corpus::load_squad_format(QNA_TEST_DATA "/qa_overfit.json", corpus::SquadVersion::V2WithUnanswerable);
  QATrainConfig cfg;
  cfg.epochs = 10;
  cfg.bpe_merges = 100;
  const auto r = train_qa(ds, nullptr, cfg, EncoderSpec::desk(), std::nullopt, [](int epoch, const QAModel&) { return epoch < 2; });
  CHECK(r.train_loss.size() == 2);
}
