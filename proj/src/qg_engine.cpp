#include "qna/qg_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "qna/nn/optim.hpp"
#include "qna/text.hpp"

namespace qna::qg {

std::string regime_name(TrainingRegime regime) {
  switch (regime) {
    case TrainingRegime::Standard: return "standard";
    case TrainingRegime::RuleMimic: return "rulemimic";
    case TrainingRegime::Augmented: return "augmented";
  }
  return "standard";
}

TrainingRegime parse_regime(const std::string& name) {
  const auto n = text::to_lower(name);
  if (n == "standard") return TrainingRegime::Standard;
  if (n == "rulemimic") return TrainingRegime::RuleMimic;
  if (n == "augmented") return TrainingRegime::Augmented;
  throw ConfigError("unknown training regime: " + name);
}

QGModelConfig QGModelConfig::paper() { return QGModelConfig{}; }

QGModelConfig QGModelConfig::desk() {
  QGModelConfig c;
  c.preset = "desk";
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.d_model = 64;
  c.ff_dim = 128;
  c.heads = 4;
  c.dropout = 0.1f;
  return c;
}

QGModelConfig QGModelConfig::preset_named(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ConfigError("unknown QG preset: " + name);
}

void QGModelConfig::validate() const {
  if (enc_layers < 0 || dec_layers < 0 || d_model < 1 || ff_dim < 1 || heads < 1)
    throw ConfigError("QG model dimensions must be positive");
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0, 1)");
  if (label_smoothing < 0.0f || label_smoothing >= 1.0f)
    throw ConfigError("label_smoothing must be in [0, 1)");
  if (max_source_len < 1) throw ConfigError("max_source_len must be >= 1");
}

nlohmann::json QGModelConfig::to_json() const {
  return {{"preset", preset},
          {"enc_layers", enc_layers},
          {"dec_layers", dec_layers},
          {"d_model", d_model},
          {"ff_dim", ff_dim},
          {"heads", heads},
          {"copy_attention", copy_attention},
          {"positional_encoding", positional_encoding},
          {"dropout", dropout},
          {"label_smoothing", label_smoothing},
          {"max_source_len", max_source_len}};
}

QGModelConfig QGModelConfig::from_json(const nlohmann::json& j) {
  QGModelConfig c;
  c.preset = j.value("preset", c.preset);
  c.enc_layers = j.value("enc_layers", c.enc_layers);
  c.dec_layers = j.value("dec_layers", c.dec_layers);
  c.d_model = j.value("d_model", c.d_model);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.heads = j.value("heads", c.heads);
  c.copy_attention = j.value("copy_attention", c.copy_attention);
  c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
  c.dropout = j.value("dropout", c.dropout);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.max_source_len = j.value("max_source_len", c.max_source_len);
  c.validate();
  return c;
}

QGTrainConfig QGTrainConfig::paper() { return QGTrainConfig{}; }

QGTrainConfig QGTrainConfig::desk() {
  QGTrainConfig c;
  c.batch_tokens = 256;
  c.max_steps = 2000;
  c.validate_every = 50;
  c.warmup_steps = 0;
  c.lr = 1e-3;
  c.schedule = "constant";
  c.adam_eps = 1e-8f;
  c.bpe_merges = 1000;
  return c;
}

void QGTrainConfig::validate() const {
  if (batch_tokens < 1) throw ConfigError("batch_tokens must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (validate_every < 1) throw ConfigError("validate_every must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  nn::LrSchedule::parse(schedule);
}

nlohmann::json QGTrainConfig::to_json() const {
  return {{"batch_tokens", batch_tokens}, {"max_steps", max_steps},
          {"validate_every", validate_every}, {"warmup_steps", warmup_steps},
          {"lr", lr}, {"schedule", schedule},
          {"beta1", beta1}, {"beta2", beta2},
          {"adam_eps", adam_eps}, {"max_grad_norm", max_grad_norm},
          {"patience", patience}, {"seed", seed},
          {"bpe_merges", bpe_merges}, {"vocab_min_count", vocab_min_count}};
}

void BeamConfig::validate() const {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (max_decode_len < 1) throw ConfigError("max_decode_len must be >= 1");
  if (length_penalty < 0.0) throw ConfigError("length_penalty must be >= 0");
}

// ---------------------------------------------------------------------------

struct QGModel::Net {
  nn::Tensor embedding;
  std::vector<nn::EncoderLayer> encoder;
  nn::LayerNorm encoder_norm;
  std::vector<nn::DecoderLayer> decoder;
  nn::LayerNorm decoder_norm;
  nn::Linear generator;
  nn::Linear copy_query;
  nn::Linear copy_switch;

  void collect(nn::ParamList& out, bool copy) {
    out.push_back({"embedding", &embedding});
    for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].collect(out, "encoder" + std::to_string(i));
    encoder_norm.collect(out, "encoder_norm");
    for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].collect(out, "decoder" + std::to_string(i));
    decoder_norm.collect(out, "decoder_norm");
    generator.collect(out, "generator");
    if (copy) {
      copy_query.collect(out, "copy_query");
      copy_switch.collect(out, "copy_switch");
    }
  }
};

QGModel::QGModel(QGModelConfig config, bpe::Tokenizer tokenizer, ModelVocab vocab, std::uint32_t seed)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)), vocab_(std::move(vocab)) {
  config_.validate();
  build(seed);
}

void QGModel::build(std::uint32_t seed) {
  nn::Rng rng(seed);
  const auto d = config_.d_model;
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  net_ = std::make_unique<Net>();
  net_->embedding = nn::normal_param(v, d, 1.0f / std::sqrt(static_cast<float>(d)), rng);
  for (int i = 0; i < config_.enc_layers; ++i)
    net_->encoder.emplace_back(d, config_.heads, config_.ff_dim, nn::Activation::Relu, true, rng);
  net_->encoder_norm = nn::LayerNorm(d);
  for (int i = 0; i < config_.dec_layers; ++i) net_->decoder.emplace_back(d, config_.heads, config_.ff_dim, rng);
  net_->decoder_norm = nn::LayerNorm(d);
  net_->generator = nn::Linear(d, v, rng);
  if (config_.copy_attention) {
    net_->copy_query = nn::Linear(d, d, rng, false);
    net_->copy_switch = nn::Linear(d, 1, rng);
  }
}

QGModel::QGModel(const QGModel& other)
    : metadata(other.metadata), config_(other.config_), tokenizer_(other.tokenizer_), vocab_(other.vocab_) {
  build(0);
  auto mine = params();
  auto theirs = const_cast<QGModel&>(other).params();
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i].tensor->mutable_value() = theirs[i].tensor->value();
}

QGModel::QGModel(QGModel&&) noexcept = default;
QGModel& QGModel::operator=(QGModel&&) noexcept = default;
QGModel::~QGModel() = default;

nn::ParamList QGModel::params() {
  nn::ParamList out;
  net_->collect(out, config_.copy_attention);
  return out;
}

void QGModel::set_dropout(float p) { config_.dropout = p; }

checkpoint::Archive QGModel::to_archive() const {
  checkpoint::Archive a;
  a.header["kind"] = "qg";
  a.header["model_config"] = config_.to_json();
  a.header["tokenizer"] = {{"vocab", tokenizer_.vocab_json()},
                           {"merges", tokenizer_.merges_txt()},
                           {"specials", tokenizer_.specials()}};
  a.header["model_vocab"] = vocab_.to_json();
  a.header["metadata"] = metadata;
  checkpoint::store_params(a, const_cast<QGModel&>(*this).params());
  return a;
}

QGModel QGModel::from_archive(const checkpoint::Archive& a) {
  if (a.header.value("kind", "") != "qg")
    throw ParseError("checkpoint kind is '" + a.header.value("kind", "") + "', expected 'qg'");
  const auto& t = a.header.at("tokenizer");
  auto tok = bpe::Tokenizer::from_gpt2(t.at("vocab").get<std::string>(), t.at("merges").get<std::string>(),
                                       t.at("specials").get<std::vector<std::string>>());
  QGModel m(QGModelConfig::from_json(a.header.at("model_config")), std::move(tok),
            ModelVocab::from_json(a.header.at("model_vocab")), 0);
  checkpoint::restore_params(a, m.params());
  m.metadata = a.header.value("metadata", nlohmann::json::object());
  return m;
}

QGModel QGModel::load(const std::filesystem::path& path) { return from_archive(checkpoint::load(path)); }

void QGModel::save(const std::filesystem::path& path) const { checkpoint::save(to_archive(), path); }

EncodedSource QGModel::encode_source_text(std::string_view text) const {
  EncodedSource s;
  auto tokens = tokenizer_.encode(text);
  if (tokens.size() > static_cast<std::size_t>(config_.max_source_len)) {
    tokens.resize(static_cast<std::size_t>(config_.max_source_len));
    s.truncated = true;
  }
  const int v = static_cast<int>(vocab_.size());
  for (int t : tokens) {
    const int id = vocab_.to_model(t);
    s.ids.push_back(id);
    if (id != ModelVocab::kUnk || !config_.copy_attention) {
      s.copy_ids.push_back(id);
      continue;
    }
    auto it = std::find(s.oov_tokens.begin(), s.oov_tokens.end(), t);
    if (it == s.oov_tokens.end()) {
      s.oov_tokens.push_back(t);
      it = s.oov_tokens.end() - 1;
    }
    s.copy_ids.push_back(v + static_cast<int>(it - s.oov_tokens.begin()));
  }
  if (s.ids.empty()) {
    // An empty source still needs one memory row to attend to.
    s.ids.push_back(ModelVocab::kEos);
    s.copy_ids.push_back(ModelVocab::kEos);
  }
  return s;
}

EncodedSource QGModel::encode_source(const corpus::QGInput& input) const {
  return encode_source_text(input.text());
}

std::vector<int> QGModel::encode_target(std::string_view question, const EncodedSource& source) const {
  std::vector<int> out;
  const int v = static_cast<int>(vocab_.size());
  for (int t : tokenizer_.encode(question)) {
    int id = vocab_.to_model(t);
    if (id == ModelVocab::kUnk && config_.copy_attention) {
      auto it = std::find(source.oov_tokens.begin(), source.oov_tokens.end(), t);
      if (it != source.oov_tokens.end()) id = v + static_cast<int>(it - source.oov_tokens.begin());
    }
    out.push_back(id);
  }
  out.push_back(ModelVocab::kEos);
  return out;
}

std::vector<int> QGModel::target_ids_to_tokens(const std::vector<int>& ids, const EncodedSource& source) const {
  std::vector<int> out;
  const int v = static_cast<int>(vocab_.size());
  for (int id : ids) {
    if (id == ModelVocab::kEos) break;
    if (id >= v) {
      out.push_back(source.oov_tokens.at(static_cast<std::size_t>(id - v)));
    } else if (id >= ModelVocab::kNumReserved) {
      out.push_back(vocab_.to_token(id));
    }
  }
  return out;
}

std::string QGModel::decode_target(const std::vector<int>& ids, const EncodedSource& source) const {
  return tokenizer_.decode(target_ids_to_tokens(ids, source));
}

namespace {

nn::Tensor embed(const nn::Tensor& table, const std::vector<int>& ids, bool positional, float dropout,
                 nn::Rng& rng, bool training) {
  const auto d = table.cols();
  nn::Tensor x = nn::scale(nn::embedding(table, ids), std::sqrt(static_cast<float>(d)));
  if (positional) x = nn::add_constant(x, nn::sinusoidal_positions(static_cast<Eigen::Index>(ids.size()), d));
  return nn::dropout(x, dropout, rng, training);
}

}  // namespace

nn::Tensor QGModel::encode(const EncodedSource& source, bool training, nn::Rng& rng) const {
  nn::Tensor x = embed(net_->embedding, source.ids, config_.positional_encoding, config_.dropout, rng, training);
  for (const auto& layer : net_->encoder) x = layer(x, nullptr, config_.dropout, rng, training);
  return net_->encoder_norm(x);
}

nn::Tensor QGModel::decode(const nn::Tensor& memory, const EncodedSource& source, const std::vector<int>& inputs,
                           bool training, nn::Rng& rng, bool last_only) const {
  const int v = static_cast<int>(vocab_.size());
  std::vector<int> ids(inputs);
  for (auto& id : ids)
    if (id >= v) id = ModelVocab::kUnk;
  nn::Tensor y = embed(net_->embedding, ids, config_.positional_encoding, config_.dropout, rng, training);
  const nn::Matrix mask = nn::causal_mask(static_cast<Eigen::Index>(ids.size()));
  for (const auto& layer : net_->decoder) y = layer(y, memory, &mask, config_.dropout, rng, training);
  y = net_->decoder_norm(y);
  if (last_only) y = nn::slice_rows(y, y.rows() - 1, 1);
  return output_head(y, memory, source);
}

nn::Tensor QGModel::output_head(const nn::Tensor& y, const nn::Tensor& memory, const EncodedSource& source) const {
  const int v = static_cast<int>(vocab_.size());
  const nn::Tensor logits = net_->generator(y);
  if (!config_.copy_attention) return nn::log_softmax_rows(logits);

  const auto ext = static_cast<Eigen::Index>(v + static_cast<int>(source.oov_tokens.size()));
  const nn::Tensor vocab_probs = nn::pad_cols(nn::softmax_rows(logits), ext);
  const float inv = 1.0f / std::sqrt(static_cast<float>(config_.d_model));
  const nn::Tensor attn = nn::softmax_rows(nn::scale(nn::matmul_nt(net_->copy_query(y), memory), inv));
  const nn::Tensor copied = nn::scatter_cols(attn, source.copy_ids, ext);
  const nn::Tensor gate = nn::sigmoid(net_->copy_switch(y));
  return nn::log(nn::add(nn::mul_col(vocab_probs, gate), nn::mul_col(copied, nn::one_minus(gate))), 1e-12f);
}

nn::Tensor QGModel::loss(const EncodedSource& source, const std::vector<int>& target, bool training,
                         nn::Rng& rng) const {
  const nn::Tensor memory = encode(source, training, rng);
  std::vector<int> inputs{ModelVocab::kBos};
  inputs.insert(inputs.end(), target.begin(), target.end() - 1);
  const nn::Tensor logp = decode(memory, source, inputs, training, rng);
  nn::Tensor nll = nn::pick_nll(logp, target);
  const float eps = config_.label_smoothing;
  if (eps <= 0.0f) return nll;
  const nn::Tensor uniform = nn::scale(nn::sum_all(logp), -1.0f / static_cast<float>(logp.cols()));
  return nn::add(nn::scale(nll, 1.0f - eps), nn::scale(uniform, eps));
}

double QGModel::sequence_log_prob(const corpus::QGInput& input, std::string_view question) const {
  nn::NoGradGuard guard;
  nn::Rng rng(0);
  const auto src = encode_source(input);
  const auto tgt = encode_target(question, src);
  const nn::Tensor memory = encode(src, false, rng);
  std::vector<int> inputs{ModelVocab::kBos};
  inputs.insert(inputs.end(), tgt.begin(), tgt.end() - 1);
  return -static_cast<double>(nn::pick_nll(decode(memory, src, inputs, false, rng), tgt).item());
}

namespace {

// Keys and values of earlier positions, per decoder layer.
struct SelfCache {
  std::vector<nn::Matrix> keys, values;
};

struct Hypothesis {
  std::vector<int> tokens;  // without BOS
  double log_prob = 0.0;
  bool finished = false;
  SelfCache cache;
};

void append_row(nn::Matrix& m, const nn::Matrix& row) {
  m.conservativeResize(m.rows() + 1, row.cols());
  m.row(m.rows() - 1) = row.row(0);
}

nn::Tensor attend(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v, int heads) {
  const Eigen::Index dh = q.cols() / heads;
  const float inv = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<nn::Tensor> outs;
  for (int h = 0; h < heads; ++h) {
    const nn::Tensor scores =
        nn::scale(nn::matmul_nt(nn::slice_cols(q, h * dh, dh), nn::slice_cols(k, h * dh, dh)), inv);
    outs.push_back(nn::matmul(nn::softmax_rows(scores), nn::slice_cols(v, h * dh, dh)));
  }
  return heads == 1 ? outs.front() : nn::concat_cols(outs);
}

double normalized(const Hypothesis& h, double alpha) {
  if (alpha <= 0.0) return h.log_prob;
  const double len = static_cast<double>(h.tokens.size());
  return h.log_prob / std::pow((5.0 + len) / 6.0, alpha);
}

}  // namespace

GeneratedQuestion QGModel::generate(const corpus::QGInput& input, const BeamConfig& beam) const {
  beam.validate();
  nn::NoGradGuard guard;
  nn::Rng rng(0);
  const auto src = encode_source(input);
  const nn::Tensor memory = encode(src, false, rng);
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const int v = static_cast<int>(vocab_.size());
  const nn::Matrix positions = nn::sinusoidal_positions(static_cast<Eigen::Index>(beam.max_decode_len) + 1, d);
  std::vector<nn::Tensor> cross_k, cross_v;
  for (const auto& layer : net_->decoder) {
    cross_k.push_back(layer.cross_attn.k(memory));
    cross_v.push_back(layer.cross_attn.v(memory));
  }

  // Log-probabilities for the token after `h`, feeding only its last token
  // and extending its cache.
  auto step = [&](Hypothesis& h) {
    const int prev = h.tokens.empty() ? ModelVocab::kBos : h.tokens.back();
    const std::vector<int> id{prev >= v ? ModelVocab::kUnk : prev};
    nn::Tensor x = nn::scale(nn::embedding(net_->embedding, id), std::sqrt(static_cast<float>(d)));
    if (config_.positional_encoding)
      x = nn::add_constant(x, positions.row(static_cast<Eigen::Index>(h.tokens.size())));
    if (h.cache.keys.empty()) {
      h.cache.keys.assign(net_->decoder.size(), nn::Matrix(0, d));
      h.cache.values.assign(net_->decoder.size(), nn::Matrix(0, d));
    }
    for (std::size_t l = 0; l < net_->decoder.size(); ++l) {
      const auto& layer = net_->decoder[l];
      const nn::Tensor n1 = layer.norm1(x);
      append_row(h.cache.keys[l], layer.self_attn.k(n1).value());
      append_row(h.cache.values[l], layer.self_attn.v(n1).value());
      const nn::Tensor sa = attend(layer.self_attn.q(n1), nn::Tensor(h.cache.keys[l]), nn::Tensor(h.cache.values[l]),
                                   layer.self_attn.heads);
      const nn::Tensor y = nn::add(x, layer.self_attn.o(sa));
      const nn::Tensor ca = attend(layer.cross_attn.q(layer.norm2(y)), cross_k[l], cross_v[l], layer.cross_attn.heads);
      const nn::Tensor z = nn::add(y, layer.cross_attn.o(ca));
      x = nn::add(z, layer.ff(layer.norm3(z), 0.0f, rng, false));
    }
    return output_head(net_->decoder_norm(x), memory, src).value();
  };

  auto search = [&](std::size_t width) {
    std::vector<Hypothesis> alive{Hypothesis{}};
    std::vector<Hypothesis> done;
    for (std::size_t t = 0; t < beam.max_decode_len && !alive.empty(); ++t) {
      struct Candidate {
        std::size_t hyp;
        int token;
        double log_prob;
      };
      std::vector<Candidate> cands;
      for (std::size_t h = 0; h < alive.size(); ++h) {
        const nn::Matrix row = step(alive[h]);
        std::vector<int> order(static_cast<std::size_t>(row.cols()));
        std::iota(order.begin(), order.end(), 0);
        // Reserved ids other than EOS are never generated.
        order.erase(std::remove_if(order.begin(), order.end(),
                                   [](int t) { return t < ModelVocab::kNumReserved && t != ModelVocab::kEos; }),
                    order.end());
        const std::size_t take = std::min(width, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&](int a, int b) { return row(0, a) > row(0, b) || (row(0, a) == row(0, b) && a < b); });
        for (std::size_t i = 0; i < take; ++i)
          cands.push_back({h, order[i], alive[h].log_prob + static_cast<double>(row(0, order[i]))});
      }
      std::stable_sort(cands.begin(), cands.end(),
                       [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
      std::vector<Hypothesis> next;
      for (std::size_t i = 0; i < cands.size() && next.size() < width && done.size() < width; ++i) {
        const auto& parent = alive[cands[i].hyp];
        Hypothesis h{parent.tokens, cands[i].log_prob, false, parent.cache};
        if (cands[i].token == ModelVocab::kEos) {
          h.finished = true;
          done.push_back(std::move(h));
        } else {
          h.tokens.push_back(cands[i].token);
          next.push_back(std::move(h));
        }
      }
      alive = std::move(next);
      if (done.size() >= width) break;
      if (!done.empty() && beam.length_penalty <= 0.0) {
        // Scores only fall as hypotheses grow, so a finished hypothesis that
        // beats every live one cannot be overtaken.
        double best_done = -std::numeric_limits<double>::infinity();
        for (const auto& f : done) best_done = std::max(best_done, f.log_prob);
        double best_alive = -std::numeric_limits<double>::infinity();
        for (const auto& a : alive) best_alive = std::max(best_alive, a.log_prob);
        if (best_done >= best_alive) break;
      }
    }
    for (auto& a : alive) done.push_back(std::move(a));
    std::size_t best = 0;
    for (std::size_t i = 1; i < done.size(); ++i) {
      const double a = normalized(done[i], beam.length_penalty);
      const double b = normalized(done[best], beam.length_penalty);
      if (a > b || (a == b && done[i].finished && !done[best].finished)) best = i;
    }
    return done[best];
  };

  Hypothesis best;
  bool have = false;
  const std::size_t first = beam.monotone ? 1 : beam.beam_size;
  for (std::size_t w = first; w <= beam.beam_size; ++w) {
    auto h = search(w);
    if (!have || normalized(h, beam.length_penalty) > normalized(best, beam.length_penalty)) {
      best = std::move(h);
      have = true;
    }
  }
  GeneratedQuestion out;
  out.question = text::trim(decode_target(best.tokens, src));
  out.log_prob = best.log_prob;
  out.finished = best.finished;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct PreparedPair {
  EncodedSource source;
  std::vector<int> target;
};

std::vector<PreparedPair> prepare(const QGModel& model, const std::vector<corpus::QGExample>& examples,
                                  Diagnostics& diag) {
  std::vector<PreparedPair> out;
  for (const auto& ex : examples) {
    if (text::trim(ex.question).empty()) {
      diag.warn("empty_target", ex.input.text());
      continue;
    }
    PreparedPair p{model.encode_source(ex.input), {}};
    if (p.source.truncated) diag.warn("source_truncated", ex.input.text());
    p.target = model.encode_target(ex.question, p.source);
    out.push_back(std::move(p));
  }
  return out;
}

double prepared_loss(const QGModel& model, const std::vector<PreparedPair>& data) {
  nn::NoGradGuard guard;
  nn::Rng rng(0);
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : data) {
    total += model.loss(p.source, p.target, false, rng).item();
    tokens += p.target.size();
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

QGModel fresh_model(const QGTrainInputs& inputs, const QGModelConfig& mc, const QGTrainConfig& tc) {
  std::vector<std::string> texts;
  auto add = [&](const std::vector<corpus::QGExample>& exs) {
    for (const auto& ex : exs) {
      texts.push_back(ex.input.text());
      texts.push_back(ex.question);
    }
  };
  add(inputs.train);
  add(inputs.vocab_only);
  auto tok = bpe::Tokenizer::train(texts, tc.bpe_merges,
                                   {std::string(corpus::kAnswerOpen), std::string(corpus::kAnswerClose)});
  std::vector<std::vector<int>> seqs;
  for (const auto& t : texts) seqs.push_back(tok.encode(t));
  const std::vector<int> markers{tok.special_id(corpus::kAnswerOpen), tok.special_id(corpus::kAnswerClose)};
  auto vocab = ModelVocab::build(seqs, tc.vocab_min_count, markers);
  return QGModel(mc, std::move(tok), std::move(vocab), tc.seed);
}

}  // namespace

double dataset_loss(const QGModel& model, const std::vector<corpus::QGExample>& examples) {
  Diagnostics diag;
  return prepared_loss(model, prepare(model, examples, diag));
}

QGTrainResult train_qg(const QGTrainInputs& inputs, TrainingRegime regime, std::optional<QGModel> init,
                       const QGModelConfig& model_config, const QGTrainConfig& config,
                       const StepCallback& on_validate) {
  config.validate();
  model_config.validate();
  nlohmann::json parent;
  if (regime == TrainingRegime::Augmented) {
    if (!init) throw ConfigError("regime 'augmented' requires an init checkpoint trained with regime 'rulemimic'");
    const auto parent_regime = init->metadata.value("regime", "");
    if (parent_regime != regime_name(TrainingRegime::RuleMimic))
      throw ConfigError("regime 'augmented' requires a 'rulemimic' init checkpoint, got '" + parent_regime + "'");
  }
  if (init) {
    parent = {{"regime", init->metadata.value("regime", "")},
              {"fingerprint", checkpoint::fingerprint(init->to_archive())}};
    if (init->metadata.contains("source_path")) parent["path"] = init->metadata["source_path"];
  }
  if (inputs.train.empty()) throw ConfigError("refusing to train: no training examples");

  QGTrainResult result{init ? std::move(*init) : fresh_model(inputs, model_config, config), {}, 0, {}};
  QGModel& m = result.model;
  if (init) m.set_dropout(model_config.dropout);
  m.metadata = nlohmann::json::object();
  m.metadata["kind"] = "qg";
  m.metadata["regime"] = regime_name(regime);
  m.metadata["parent"] = parent;
  m.metadata["train_config"] = config.to_json();

  const auto train = prepare(m, inputs.train, result.diagnostics);
  const auto val = prepare(m, inputs.val, result.diagnostics);
  if (train.empty()) throw ConfigError("refusing to train: no usable training examples");

  nn::AdamConfig ac;
  ac.lr = static_cast<float>(config.lr);
  ac.beta1 = config.beta1;
  ac.beta2 = config.beta2;
  ac.eps = config.adam_eps;
  ac.max_grad_norm = config.max_grad_norm;
  nn::LrSchedule sched;
  sched.kind = nn::LrSchedule::parse(config.schedule);
  sched.warmup_steps = config.warmup_steps;
  sched.model_dim = m.config().d_model;
  nn::Adam opt(m.params(), ac, sched);

  nn::Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::vector<nn::Matrix> best_weights;
  double best = std::numeric_limits<double>::infinity();
  int bad = 0;

  while (result.steps < config.max_steps) {
    std::size_t tokens = 0;
    while (tokens < config.batch_tokens) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto& p = train[order[cursor++]];
      m.loss(p.source, p.target, true, rng).backward();
      tokens += p.target.size();
      if (tokens >= config.batch_tokens || cursor == order.size()) break;
    }
    opt.step(1.0f / static_cast<float>(tokens));
    ++result.steps;

    if (result.steps % config.validate_every != 0 && result.steps != config.max_steps) continue;
    bool stop = false;
    if (!val.empty()) {
      const double vl = prepared_loss(m, val);
      if (vl < best) {
        best = vl;
        bad = 0;
        best_weights.clear();
        for (const auto& p : m.params()) best_weights.push_back(p.tensor->value());
      } else if (++bad >= config.patience) {
        stop = true;
      }
      result.history.push_back({result.steps, vl, best});
    }
    if (on_validate && !on_validate(result.steps, m)) stop = true;
    if (stop) break;
  }
  if (!best_weights.empty()) {
    auto params = m.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor->mutable_value() = best_weights[i];
  }
  m.metadata["steps"] = result.steps;
  auto& hist = m.metadata["history"] = nlohmann::json::array();
  for (const auto& h : result.history)
    hist.push_back({{"step", h.step}, {"val_loss", h.loss}, {"best_so_far", h.best_so_far}});
  return result;
}

std::vector<GeneratedQuestion> generate_questions(const std::vector<corpus::QGInput>& inputs,
                                                  const QGModel& model, const BeamConfig& beam,
                                                  Diagnostics* diagnostics) {
  beam.validate();
  std::vector<GeneratedQuestion> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    GeneratedQuestion g;
    try {
      if (diagnostics && model.encode_source(inputs[i]).truncated)
        diagnostics->warn("source_truncated", inputs[i].text());
      g = model.generate(inputs[i], beam);
    } catch (const std::exception& e) {
      g.failed = true;
      g.question.clear();
      if (diagnostics) diagnostics->warn("generation_failed", e.what());
    }
    g.input_index = i;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace qna::qg
