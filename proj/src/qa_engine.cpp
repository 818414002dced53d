#include "qna/qa_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "qna/nn/optim.hpp"
#include "qna/text.hpp"

namespace qna::qa {

namespace {

double log_sum_exp(const LogitGroups& groups) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& g : groups)
    for (double z : g) m = std::max(m, z);
  double s = 0.0;
  for (const auto& g : groups)
    for (double z : g) s += std::exp(z - m);
  return m + std::log(s);
}

void check_groups(const LogitGroups& groups) {
  bool any = false;
  for (const auto& g : groups) {
    for (double z : g)
      if (!std::isfinite(z)) throw std::invalid_argument("non-finite logit");
    any = any || !g.empty();
  }
  if (!any) throw std::invalid_argument("no candidates");
}

using PositionSet = std::set<std::pair<std::size_t, std::size_t>>;

/// -ln(mass on `gold`) and its gradient.
double marginal_nll(const LogitGroups& logits, const PositionSet& gold, LogitGroups& grad) {
  const double lse_all = log_sum_exp(logits);
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& [p, i] : gold) m = std::max(m, logits[p][i]);
  double s = 0.0;
  for (const auto& [p, i] : gold) s += std::exp(logits[p][i] - m);
  const double lse_gold = m + std::log(s);
  grad.assign(logits.size(), {});
  for (std::size_t p = 0; p < logits.size(); ++p) {
    grad[p].resize(logits[p].size());
    for (std::size_t i = 0; i < logits[p].size(); ++i) grad[p][i] = std::exp(logits[p][i] - lse_all);
  }
  for (const auto& [p, i] : gold) grad[p][i] -= std::exp(logits[p][i] - lse_gold);
  return std::max(0.0, lse_all - lse_gold);
}

}  // namespace

LogitGroups shared_norm_probs(const LogitGroups& groups) {
  check_groups(groups);
  const double lse = log_sum_exp(groups);
  LogitGroups out(groups.size());
  for (std::size_t p = 0; p < groups.size(); ++p) {
    out[p].reserve(groups[p].size());
    for (double z : groups[p]) out[p].push_back(std::exp(z - lse));
  }
  return out;
}

SharedNormLoss shared_norm_loss(const LogitGroups& start_logits, const LogitGroups& end_logits,
                                const std::vector<GoldPosition>& gold) {
  check_groups(start_logits);
  check_groups(end_logits);
  if (start_logits.size() != end_logits.size())
    throw std::invalid_argument("start and end logits disagree on the number of groups");
  for (std::size_t p = 0; p < start_logits.size(); ++p)
    if (start_logits[p].size() != end_logits[p].size())
      throw std::invalid_argument("start and end logits disagree on a group length");

  SharedNormLoss out;
  PositionSet starts, ends;
  for (const auto& g : gold) {
    if (g.paragraph >= start_logits.size() || g.start >= start_logits[g.paragraph].size() ||
        g.end >= end_logits[g.paragraph].size()) {
      ++out.dropped;
      continue;
    }
    starts.emplace(g.paragraph, g.start);
    ends.emplace(g.paragraph, g.end);
  }
  if (!gold.empty() && starts.empty()) out.fell_back = true;
  if (starts.empty()) {
    for (std::size_t p = 0; p < start_logits.size(); ++p) {
      if (start_logits[p].empty()) continue;
      starts.emplace(p, 0);
      ends.emplace(p, 0);
    }
  }
  out.loss = marginal_nll(start_logits, starts, out.start_grad) +
             marginal_nll(end_logits, ends, out.end_grad);
  return out;
}

SpanChoice select_span(const LogitGroups& start_probs, const LogitGroups& end_probs,
                       std::size_t max_answer_len) {
  if (start_probs.size() != end_probs.size())
    throw std::invalid_argument("start and end groups differ in count");
  SpanChoice best;
  bool have = false;
  auto consider = [&](std::size_t p, std::size_t s, std::size_t e, double prob) {
    if (!have || prob > best.prob) {
      best = {s != 0, p, s, e, prob};
      have = true;
    }
  };
  for (std::size_t p = 0; p < start_probs.size(); ++p) {
    const auto& ps = start_probs[p];
    const auto& pe = end_probs[p];
    if (ps.size() != pe.size()) throw std::invalid_argument("start and end lengths differ");
    if (ps.empty()) continue;
    consider(p, 0, 0, ps[0] * pe[0]);
    // For each start, the best end in its window; strict comparison keeps
    // the earliest (start, end) among equal products.
    for (std::size_t s = 1; s < ps.size() && max_answer_len > 0; ++s) {
      const std::size_t last = std::min(ps.size() - 1, s + max_answer_len - 1);
      std::size_t arg = s;
      double prod = ps[s] * pe[s];
      for (std::size_t e = s + 1; e <= last; ++e) {
        if (ps[s] * pe[e] > prod) {
          prod = ps[s] * pe[e];
          arg = e;
        }
      }
      consider(p, s, arg, prod);
    }
  }
  if (!have) throw std::invalid_argument("no candidates");
  return best;
}

// ---------------------------------------------------------------------------

EncoderSpec EncoderSpec::desk() { return EncoderSpec{}; }

EncoderSpec EncoderSpec::base() {
  EncoderSpec s;
  s.preset = "base";
  s.layers = 12;
  s.hidden_dim = 768;
  s.heads = 12;
  s.ff_dim = 3072;
  s.max_sequence_len = 384;
  s.pretrained = true;
  s.dropout = 0.1f;
  return s;
}

EncoderSpec EncoderSpec::preset_named(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "base") return base();
  throw ConfigError("unknown encoder preset: " + name);
}

void EncoderSpec::validate() const {
  if (layers < 0 || hidden_dim < 1 || heads < 1 || ff_dim < 1)
    throw ConfigError("encoder dimensions must be positive");
  if (hidden_dim % heads != 0) throw ConfigError("hidden_dim must be divisible by heads");
  if (max_sequence_len < 4) throw ConfigError("max_sequence_len must be >= 4");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0, 1)");
}

nlohmann::json EncoderSpec::to_json() const {
  return {{"preset", preset},   {"layers", layers},
          {"hidden_dim", hidden_dim}, {"heads", heads},
          {"ff_dim", ff_dim},   {"max_sequence_len", max_sequence_len},
          {"pretrained", pretrained}, {"dropout", dropout}};
}

EncoderSpec EncoderSpec::from_json(const nlohmann::json& j) {
  EncoderSpec s;
  s.preset = j.value("preset", s.preset);
  s.layers = j.value("layers", s.layers);
  s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
  s.heads = j.value("heads", s.heads);
  s.ff_dim = j.value("ff_dim", s.ff_dim);
  s.max_sequence_len = j.value("max_sequence_len", s.max_sequence_len);
  s.pretrained = j.value("pretrained", s.pretrained);
  s.dropout = j.value("dropout", s.dropout);
  s.validate();
  return s;
}

TransformerEncoder::TransformerEncoder(const EncoderSpec& spec, std::size_t vocab_size, nn::Rng& rng)
    : spec_(spec),
      token_emb_(nn::normal_param(static_cast<Eigen::Index>(vocab_size), spec.hidden_dim, 0.02f, rng)),
      position_emb_(nn::normal_param(spec.max_sequence_len, spec.hidden_dim, 0.02f, rng)),
      segment_emb_(nn::normal_param(2, spec.hidden_dim, 0.02f, rng)),
      emb_norm_(spec.hidden_dim, 1e-12f) {
  for (int i = 0; i < spec.layers; ++i)
    layers_.emplace_back(spec.hidden_dim, spec.heads, spec.ff_dim, nn::Activation::Gelu, false, rng);
}

nn::Tensor TransformerEncoder::encode(std::span<const int> ids, std::span<const int> segments,
                                      bool training, nn::Rng& rng) const {
  if (ids.size() > static_cast<std::size_t>(spec_.max_sequence_len))
    throw std::invalid_argument("sequence longer than max_sequence_len");
  std::vector<int> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  nn::Tensor x = nn::add(nn::add(nn::embedding(token_emb_, ids), nn::embedding(position_emb_, positions)),
                         nn::embedding(segment_emb_, segments));
  x = nn::dropout(emb_norm_(x), spec_.dropout, rng, training);
  for (const auto& layer : layers_) x = layer(x, nullptr, spec_.dropout, rng, training);
  return x;
}

void TransformerEncoder::collect(nn::ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".token_emb", &token_emb_});
  out.push_back({prefix + ".position_emb", &position_emb_});
  out.push_back({prefix + ".segment_emb", &segment_emb_});
  emb_norm_.collect(out, prefix + ".emb_norm");
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(out, prefix + ".layer" + std::to_string(i));
}

void TransformerEncoder::set_dropout(float p) { spec_.dropout = p; }

// ---------------------------------------------------------------------------

QAModel::QAModel(EncoderSpec spec, bpe::Tokenizer tokenizer, ModelVocab vocab, std::uint32_t seed)
    : spec_(std::move(spec)), tokenizer_(std::move(tokenizer)), vocab_(std::move(vocab)) {
  spec_.validate();
  build(seed);
}

void QAModel::build(std::uint32_t seed) {
  nn::Rng rng(seed);
  encoder_ = std::make_unique<TransformerEncoder>(spec_, vocab_.size(), rng);
  head_ = nn::Linear(spec_.hidden_dim, 2, rng);
}

QAModel::QAModel(const QAModel& other)
    : metadata(other.metadata), spec_(other.spec_), tokenizer_(other.tokenizer_), vocab_(other.vocab_) {
  build(0);
  auto mine = params();
  auto theirs = const_cast<QAModel&>(other).params();
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i].tensor->mutable_value() = theirs[i].tensor->value();
}

QAModel::QAModel(QAModel&&) noexcept = default;
QAModel& QAModel::operator=(QAModel&&) noexcept = default;
QAModel::~QAModel() = default;

nn::ParamList QAModel::params() {
  nn::ParamList out;
  encoder_->collect(out, "encoder");
  head_.collect(out, "span_head");
  return out;
}

void QAModel::set_dropout(float p) {
  spec_.dropout = p;
  encoder_->set_dropout(p);
}

checkpoint::Archive QAModel::to_archive() const {
  checkpoint::Archive a;
  a.header["kind"] = "qa";
  a.header["encoder_spec"] = spec_.to_json();
  a.header["tokenizer"] = {{"vocab", tokenizer_.vocab_json()},
                           {"merges", tokenizer_.merges_txt()},
                           {"specials", tokenizer_.specials()}};
  a.header["model_vocab"] = vocab_.to_json();
  a.header["metadata"] = metadata;
  checkpoint::store_params(a, const_cast<QAModel&>(*this).params());
  return a;
}

QAModel QAModel::from_archive(const checkpoint::Archive& a) {
  if (a.header.value("kind", "") != "qa")
    throw ParseError("checkpoint kind is '" + a.header.value("kind", "") + "', expected 'qa'");
  const auto& t = a.header.at("tokenizer");
  auto tok = bpe::Tokenizer::from_gpt2(t.at("vocab").get<std::string>(), t.at("merges").get<std::string>(),
                                       t.at("specials").get<std::vector<std::string>>());
  QAModel m(EncoderSpec::from_json(a.header.at("encoder_spec")), std::move(tok),
            ModelVocab::from_json(a.header.at("model_vocab")), 0);
  checkpoint::restore_params(a, m.params());
  m.metadata = a.header.value("metadata", nlohmann::json::object());
  return m;
}

QAModel QAModel::load(const std::filesystem::path& path) { return from_archive(checkpoint::load(path)); }

void QAModel::save(const std::filesystem::path& path) const { checkpoint::save(to_archive(), path); }

std::vector<int> QAModel::encode_question(std::string_view question) const {
  std::vector<int> ids;
  for (int t : tokenizer_.encode(question)) ids.push_back(vocab_.to_model(t));
  return ids;
}

EncodedParagraph QAModel::encode_paragraph(const corpus::Paragraph& paragraph) const {
  EncodedParagraph out;
  for (std::size_t w = 0; w < paragraph.tokens.size(); ++w) {
    for (int t : tokenizer_.encode(" " + paragraph.tokens[w])) {
      out.ids.push_back(vocab_.to_model(t));
      out.word.push_back(w);
    }
  }
  return out;
}

PackedInput QAModel::pack(std::span<const int> question_ids, const EncodedParagraph& paragraph) const {
  const auto max_len = static_cast<std::size_t>(spec_.max_sequence_len);
  if (question_ids.size() + 3 > max_len)
    throw std::invalid_argument("question of " + std::to_string(question_ids.size()) +
                                " pieces exceeds the max_sequence_len budget");
  const std::size_t budget = max_len - question_ids.size() - 3;
  PackedInput in;
  in.ids.push_back(ModelVocab::kCls);
  in.ids.insert(in.ids.end(), question_ids.begin(), question_ids.end());
  in.ids.push_back(ModelVocab::kSep);
  in.segments.assign(in.ids.size(), 0);
  in.paragraph_offset = in.ids.size();
  in.paragraph_pieces = std::min(budget, paragraph.ids.size());
  in.ids.insert(in.ids.end(), paragraph.ids.begin(),
                paragraph.ids.begin() + static_cast<std::ptrdiff_t>(in.paragraph_pieces));
  in.ids.push_back(ModelVocab::kSep);
  in.segments.resize(in.ids.size(), 1);
  return in;
}

nn::Tensor QAModel::forward(const PackedInput& input, bool training, nn::Rng& rng) const {
  const nn::Tensor h = encoder_->encode(input.ids, input.segments, training, rng);
  const nn::Tensor logits = head_(h);
  std::vector<int> rows{0};
  for (std::size_t i = 0; i < input.paragraph_pieces; ++i)
    rows.push_back(static_cast<int>(input.paragraph_offset + i));
  return nn::embedding(logits, rows);
}

namespace {

std::vector<std::string> question_terms(std::string_view question) {
  return text::token_strings(text::tokenize_words(question));
}

void split_logits(const nn::Matrix& m, std::vector<double>& start, std::vector<double>& end) {
  start.resize(static_cast<std::size_t>(m.rows()));
  end.resize(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    start[static_cast<std::size_t>(r)] = m(r, 0);
    end[static_cast<std::size_t>(r)] = m(r, 1);
  }
}

}  // namespace

SpanScores QAModel::score(std::string_view question, const corpus::Document& document,
                          const retrieval::RetrievalConfig& retrieval) const {
  if (document.paragraphs.empty()) throw std::invalid_argument("document has no paragraphs");
  const auto q = encode_question(question);
  if (q.size() + 3 > static_cast<std::size_t>(spec_.max_sequence_len))
    throw std::invalid_argument("question exceeds the max_sequence_len budget");
  const auto ranked = retrieval::rank_paragraphs(question_terms(question), document.paragraphs, retrieval);
  nn::NoGradGuard guard;
  nn::Rng rng(0);
  SpanScores out;
  for (const auto& r : ranked) {
    const auto packed = pack(q, encode_paragraph(document.paragraphs[r.paragraph]));
    const auto logits = forward(packed, false, rng);
    out.paragraphs.push_back(r.paragraph);
    out.start_logits.emplace_back();
    out.end_logits.emplace_back();
    split_logits(logits.value(), out.start_logits.back(), out.end_logits.back());
  }
  return out;
}

AnswerPrediction QAModel::predict(std::string_view question, const corpus::Document& document,
                                  const retrieval::RetrievalConfig& retrieval,
                                  const DecodeConfig& decode) const {
  AnswerPrediction pred;
  pred.scores = score(question, document, retrieval);
  const auto ps = shared_norm_probs(pred.scores.start_logits);
  const auto pe = shared_norm_probs(pred.scores.end_logits);
  const auto choice = select_span(ps, pe, decode.max_answer_len);
  pred.score = std::log(choice.prob);
  if (!choice.answerable) return pred;
  const std::size_t doc_p = pred.scores.paragraphs[choice.paragraph];
  const auto& para = document.paragraphs[doc_p];
  const auto enc = encode_paragraph(para);
  pred.answerable = true;
  pred.paragraph = doc_p;
  pred.para_id = para.para_id;
  pred.start_piece = choice.start;
  pred.end_piece = choice.end;
  pred.start_token = enc.word[choice.start - 1];
  pred.end_token = enc.word[choice.end - 1];
  pred.answer_text = para.span_text(pred.start_token, pred.end_token);
  return pred;
}

// ---------------------------------------------------------------------------

QATrainConfig QATrainConfig::paper() {
  QATrainConfig c;
  c.k_train = 4;
  c.epochs = 3;
  c.lr = 3e-5;
  c.max_answer_len = 30;
  return c;
}

void QATrainConfig::validate() const {
  if (k_train < 1) throw ConfigError("k_train must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (optimizer != "adam") throw ConfigError("unsupported optimizer: " + optimizer);
  if (max_answer_len < 1) throw ConfigError("max_answer_len must be >= 1");
}

nlohmann::json QATrainConfig::to_json() const {
  nlohmann::json j = {{"k_train", k_train},
                      {"batch_size", batch_size},
                      {"epochs", epochs},
                      {"lr", lr},
                      {"optimizer", optimizer},
                      {"max_answer_len", max_answer_len},
                      {"max_grad_norm", max_grad_norm},
                      {"seed", seed},
                      {"bpe_merges", bpe_merges},
                      {"vocab_min_count", vocab_min_count},
                      {"early_stopping_patience", early_stopping_patience},
                      {"keep_best", keep_best}};
  if (dropout) j["dropout"] = *dropout;
  return j;
}

bpe::Tokenizer fit_tokenizer(const corpus::Dataset& data, std::size_t merges) {
  std::vector<std::string> texts;
  for (const auto& ex : data.examples) texts.push_back(ex.question);
  for (const auto& d : data.documents)
    for (const auto& p : d.paragraphs) texts.push_back(p.raw_text);
  return bpe::Tokenizer::train(texts, merges, {std::string(corpus::kAnswerOpen), std::string(corpus::kAnswerClose)});
}

namespace {

struct PreparedExample {
  std::vector<PackedInput> inputs;
  std::vector<GoldPosition> gold;
};

/// Packs each question with its top-k paragraphs and maps gold word spans to
/// encoded positions. Gold in unretrieved paragraphs gets an out-of-range
/// group index so the loss counts it as dropped.
std::vector<PreparedExample> prepare(const QAModel& model, const corpus::Dataset& data, std::size_t k,
                                     Diagnostics& diag) {
  std::map<const corpus::Paragraph*, EncodedParagraph> cache;
  auto encoded = [&](const corpus::Paragraph& p) -> const EncodedParagraph& {
    auto it = cache.find(&p);
    if (it == cache.end()) it = cache.emplace(&p, model.encode_paragraph(p)).first;
    return it->second;
  };
  retrieval::RetrievalConfig rc;
  rc.k = k;
  std::vector<PreparedExample> out;
  for (const auto& ex : data.examples) {
    const auto* doc = data.find_document(ex.doc_id);
    if (!doc || doc->paragraphs.empty()) {
      diag.warn("missing_document", "question " + ex.qid + " refers to unknown document " + ex.doc_id);
      continue;
    }
    const auto q = model.encode_question(ex.question);
    if (q.size() + 3 > static_cast<std::size_t>(model.spec().max_sequence_len)) {
      diag.warn("question_too_long", "question " + ex.qid + " skipped");
      continue;
    }
    PreparedExample pe;
    const auto ranked = retrieval::rank_paragraphs(question_terms(ex.question), doc->paragraphs, rc);
    for (const auto& r : ranked) pe.inputs.push_back(model.pack(q, encoded(doc->paragraphs[r.paragraph])));
    if (ex.is_answerable) {
      for (const auto& g : ex.gold_answers) {
        GoldPosition pos{std::numeric_limits<std::size_t>::max(), 0, 0};
        for (std::size_t gi = 0; gi < ranked.size(); ++gi) {
          if (ranked[gi].paragraph != g.paragraph) continue;
          const auto& enc = encoded(doc->paragraphs[g.paragraph]);
          const auto first = std::find(enc.word.begin(), enc.word.end(), g.start);
          const auto last = std::find(enc.word.rbegin(), enc.word.rend(), g.end);
          if (first == enc.word.end() || last == enc.word.rend()) break;
          pos.paragraph = gi;
          pos.start = 1 + static_cast<std::size_t>(first - enc.word.begin());
          pos.end = 1 + static_cast<std::size_t>(enc.word.rend() - last) - 1;
          break;
        }
        if (pos.paragraph == std::numeric_limits<std::size_t>::max())
          diag.warn("gold_not_retrieved", "question " + ex.qid);
        pe.gold.push_back(pos);
      }
    }
    out.push_back(std::move(pe));
  }
  return out;
}

/// Shared-norm loss over per-paragraph logit tensors ((1 + n) x 2 each).
nn::Tensor loss_node(const std::vector<nn::Tensor>& logits, const std::vector<GoldPosition>& gold,
                     SharedNormLoss* info) {
  LogitGroups start(logits.size()), end(logits.size());
  for (std::size_t p = 0; p < logits.size(); ++p) split_logits(logits[p].value(), start[p], end[p]);
  auto res = shared_norm_loss(start, end, gold);
  nn::Matrix v(1, 1);
  v(0, 0) = static_cast<float>(res.loss);
  auto sg = res.start_grad;
  auto eg = res.end_grad;
  if (info) *info = res;
  return nn::make_result(std::move(v), logits, [sg = std::move(sg), eg = std::move(eg)](nn::Node& n) {
    const float seed = n.grad(0, 0);
    for (std::size_t p = 0; p < n.parents.size(); ++p) {
      auto& parent = *n.parents[p];
      if (!parent.requires_grad) continue;
      nn::Matrix g(parent.value.rows(), 2);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        g(r, 0) = static_cast<float>(sg[p][static_cast<std::size_t>(r)]) * seed;
        g(r, 1) = static_cast<float>(eg[p][static_cast<std::size_t>(r)]) * seed;
      }
      parent.accumulate(g);
    }
  });
}

double prepared_loss(const QAModel& model, const std::vector<PreparedExample>& data, Diagnostics* diag) {
  if (data.empty()) return 0.0;
  nn::NoGradGuard guard;
  nn::Rng rng(0);
  double total = 0.0;
  for (const auto& ex : data) {
    std::vector<nn::Tensor> logits;
    for (const auto& in : ex.inputs) logits.push_back(model.forward(in, false, rng));
    SharedNormLoss info;
    total += loss_node(logits, ex.gold, &info).item();
    if (diag && info.fell_back) diag->warn("sentinel_fallback", "all gold occurrences dropped");
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

double dataset_loss(const QAModel& model, const corpus::Dataset& data, std::size_t k, Diagnostics* diagnostics) {
  Diagnostics local;
  const auto prepared = prepare(model, data, k, diagnostics ? *diagnostics : local);
  return prepared_loss(model, prepared, diagnostics);
}

std::map<std::string, std::string> predict_dataset(const QAModel& model, const corpus::Dataset& data,
                                                   const retrieval::RetrievalConfig& retrieval,
                                                   const DecodeConfig& decode) {
  std::map<std::string, std::string> out;
  for (const auto& ex : data.examples) {
    const auto* doc = data.find_document(ex.doc_id);
    if (!doc || doc->paragraphs.empty()) continue;
    try {
      const auto p = model.predict(ex.question, *doc, retrieval, decode);
      out[ex.qid] = p.answerable ? p.answer_text : std::string();
    } catch (const std::invalid_argument&) {
      out[ex.qid] = std::string();
    }
  }
  return out;
}

QATrainResult train_qa(const corpus::Dataset& train, const corpus::Dataset* val, const QATrainConfig& config,
                       const EncoderSpec& spec, std::optional<QAModel> init, const EpochCallback& on_epoch) {
  config.validate();
  if (train.examples.empty()) throw ConfigError("refusing to train: no answerable or sentinel examples");

  auto model = [&]() -> QAModel {
    if (init) return std::move(*init);
    EncoderSpec s = spec;
    if (config.dropout) s.dropout = *config.dropout;
    auto tok = fit_tokenizer(train, config.bpe_merges);
    std::vector<std::vector<int>> seqs;
    for (const auto& ex : train.examples) seqs.push_back(tok.encode(ex.question));
    for (const auto& d : train.documents)
      for (const auto& p : d.paragraphs)
        for (const auto& w : p.tokens) seqs.push_back(tok.encode(" " + w));
    auto vocab = ModelVocab::build(seqs, config.vocab_min_count);
    return QAModel(s, std::move(tok), std::move(vocab), config.seed);
  }();
  if (init && config.dropout) model.set_dropout(*config.dropout);

  QATrainResult result{std::move(model), {}, {}, {}};
  QAModel& m = result.model;
  m.metadata["kind"] = "qa";
  m.metadata["train_config"] = config.to_json();

  const auto prepared = prepare(m, train, config.k_train, result.diagnostics);
  if (prepared.empty()) throw ConfigError("refusing to train: no usable training examples");
  std::vector<PreparedExample> val_prepared;
  if (val) val_prepared = prepare(m, *val, config.k_train, result.diagnostics);

  nn::AdamConfig ac;
  ac.lr = static_cast<float>(config.lr);
  ac.max_grad_norm = config.max_grad_norm;
  nn::Adam opt(m.params(), ac);
  nn::Rng rng(config.seed);
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<nn::Matrix> best_weights;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t in_batch = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& ex = prepared[order[i]];
      std::vector<nn::Tensor> logits;
      for (const auto& in : ex.inputs) logits.push_back(m.forward(in, true, rng));
      SharedNormLoss info;
      auto loss = loss_node(logits, ex.gold, &info);
      if (info.fell_back) result.diagnostics.warn("sentinel_fallback", "all gold occurrences dropped");
      epoch_loss += loss.item();
      loss.backward();
      if (++in_batch == config.batch_size || i + 1 == order.size()) {
        opt.step(1.0f / static_cast<float>(in_batch));
        in_batch = 0;
      }
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

    if (!val_prepared.empty()) {
      const double vl = prepared_loss(m, val_prepared, nullptr);
      if (vl < best) {
        best = vl;
        since_best = 0;
        if (config.keep_best) {
          best_weights.clear();
          for (const auto& p : m.params()) best_weights.push_back(p.tensor->value());
        }
      } else {
        ++since_best;
      }
      result.history.push_back({epoch, vl, best});
      if (config.early_stopping_patience > 0 && since_best >= config.early_stopping_patience) break;
    }
    if (on_epoch && !on_epoch(epoch, m)) break;
  }
  if (!best_weights.empty()) {
    auto params = m.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor->mutable_value() = best_weights[i];
  }
  auto& hist = m.metadata["history"] = nlohmann::json::array();
  for (const auto& h : result.history)
    hist.push_back({{"epoch", h.epoch}, {"val_loss", h.loss}, {"best_so_far", h.best_so_far}});
  m.metadata["train_loss"] = result.train_loss;
  return result;
}

}  // namespace qna::qa
