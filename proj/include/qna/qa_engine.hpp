#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qna/bpe.hpp"
#include "qna/checkpoint.hpp"
#include "qna/corpus.hpp"
#include "qna/diagnostics.hpp"
#include "qna/nn/layers.hpp"
#include "qna/retrieval.hpp"
#include "qna/vocab.hpp"

namespace qna::qa {

using LogitGroups = std::vector<std::vector<double>>;

/// exp(z) / sum of exp over every position of every group.
/// Throws std::invalid_argument("no candidates") when all groups are empty.
LogitGroups shared_norm_probs(const LogitGroups& groups);

struct GoldPosition {
  std::size_t paragraph = 0;  // index into the groups
  std::size_t start = 0;      // encoded position; 0 is the sentinel
  std::size_t end = 0;
};

struct SharedNormLoss {
  double loss = 0.0;
  LogitGroups start_grad;  // d loss / d start logits
  LogitGroups end_grad;
  std::size_t dropped = 0;    // occurrences outside the encoded range
  bool fell_back = false;     // every occurrence dropped; sentinel used
};

/// -ln(sum of start mass on gold starts) - ln(sum of end mass on gold ends),
/// both under shared normalization. Distinct gold positions are summed.
/// An empty gold list means unanswerable: position 0 of every group is gold
/// for both start and end.
SharedNormLoss shared_norm_loss(const LogitGroups& start_logits, const LogitGroups& end_logits,
                                const std::vector<GoldPosition>& gold);

struct SpanChoice {
  bool answerable = false;
  std::size_t paragraph = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  double prob = 0.0;  // start_prob * end_prob
};

/// Best (paragraph, start, end) by start_prob * end_prob over the sentinel
/// (p, 0, 0) and spans 1 <= start <= end with end - start + 1 <= max_len.
/// Ties go to the lexicographically smallest (paragraph, start, end).
SpanChoice select_span(const LogitGroups& start_probs, const LogitGroups& end_probs,
                       std::size_t max_answer_len);

struct EncoderSpec {
  std::string preset = "desk";
  int layers = 2;
  int hidden_dim = 64;
  int heads = 4;
  int ff_dim = 128;
  int max_sequence_len = 384;
  bool pretrained = false;
  float dropout = 0.1f;

  static EncoderSpec desk();
  static EncoderSpec base();
  static EncoderSpec preset_named(const std::string& name);
  void validate() const;
  nlohmann::json to_json() const;
  static EncoderSpec from_json(const nlohmann::json& j);
};

/// Token ids -> contextual vectors (rows = positions).
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual nn::Tensor encode(std::span<const int> ids, std::span<const int> segments, bool training,
                            nn::Rng& rng) const = 0;
  virtual int dim() const = 0;
  virtual void collect(nn::ParamList& out, const std::string& prefix) = 0;
};

/// BERT-style post-norm transformer encoder with learned positions.
class TransformerEncoder : public Encoder {
 public:
  TransformerEncoder(const EncoderSpec& spec, std::size_t vocab_size, nn::Rng& rng);
  nn::Tensor encode(std::span<const int> ids, std::span<const int> segments, bool training,
                    nn::Rng& rng) const override;
  int dim() const override { return spec_.hidden_dim; }
  void collect(nn::ParamList& out, const std::string& prefix) override;
  void set_dropout(float p);

 private:
  EncoderSpec spec_;
  nn::Tensor token_emb_, position_emb_, segment_emb_;
  nn::LayerNorm emb_norm_;
  std::vector<nn::EncoderLayer> layers_;
};

/// Subword pieces of one paragraph, with the word each piece came from.
struct EncodedParagraph {
  std::vector<int> ids;         // model ids
  std::vector<std::size_t> word;
};

/// [CLS] question [SEP] paragraph [SEP], paragraph truncated to fit.
struct PackedInput {
  std::vector<int> ids;
  std::vector<int> segments;
  std::size_t paragraph_offset = 0;  // position of the first paragraph piece
  std::size_t paragraph_pieces = 0;  // pieces kept after truncation
};

struct SpanScores {
  std::vector<std::size_t> paragraphs;  // document paragraph index per group
  LogitGroups start_logits;             // [0] = sentinel, [1 + i] = piece i
  LogitGroups end_logits;
};

struct AnswerPrediction {
  bool answerable = false;
  std::size_t paragraph = 0;      // document paragraph index
  std::string para_id;
  std::size_t start_token = 0;    // paragraph word tokens, inclusive
  std::size_t end_token = 0;
  std::size_t start_piece = 0;    // encoded positions, inclusive
  std::size_t end_piece = 0;
  std::string answer_text;
  double score = 0.0;             // ln(start_prob * end_prob)
  SpanScores scores;
};

struct DecodeConfig {
  std::size_t max_answer_len = 30;
};

class QAModel {
 public:
  QAModel(EncoderSpec spec, bpe::Tokenizer tokenizer, ModelVocab vocab, std::uint32_t seed);
  QAModel(const QAModel& other);
  QAModel& operator=(const QAModel&) = delete;
  QAModel(QAModel&&) noexcept;
  QAModel& operator=(QAModel&&) noexcept;
  ~QAModel();

  static QAModel from_archive(const checkpoint::Archive& archive);
  static QAModel load(const std::filesystem::path& path);
  checkpoint::Archive to_archive() const;
  void save(const std::filesystem::path& path) const;

  std::vector<int> encode_question(std::string_view question) const;
  EncodedParagraph encode_paragraph(const corpus::Paragraph& paragraph) const;
  PackedInput pack(std::span<const int> question_ids, const EncodedParagraph& paragraph) const;

  /// (1 + paragraph_pieces) x 2 logits: column 0 start, column 1 end; row 0
  /// is the sentinel position.
  nn::Tensor forward(const PackedInput& input, bool training, nn::Rng& rng) const;

  SpanScores score(std::string_view question, const corpus::Document& document,
                   const retrieval::RetrievalConfig& retrieval) const;
  AnswerPrediction predict(std::string_view question, const corpus::Document& document,
                           const retrieval::RetrievalConfig& retrieval,
                           const DecodeConfig& decode = {}) const;

  nn::ParamList params();
  void set_dropout(float p);
  const EncoderSpec& spec() const { return spec_; }
  const bpe::Tokenizer& tokenizer() const { return tokenizer_; }
  const ModelVocab& vocab() const { return vocab_; }

  /// Free-form metadata stored in the checkpoint header (training config,
  /// history, version string).
  nlohmann::json metadata = nlohmann::json::object();

 private:
  void build(std::uint32_t seed);

  EncoderSpec spec_;
  bpe::Tokenizer tokenizer_;
  ModelVocab vocab_;
  std::unique_ptr<TransformerEncoder> encoder_;
  nn::Linear head_;
};

struct QATrainConfig {
  std::size_t k_train = 4;
  std::size_t batch_size = 32;
  int epochs = 3;
  double lr = 3e-5;
  std::string optimizer = "adam";
  std::size_t max_answer_len = 30;
  float max_grad_norm = 1.0f;
  std::uint32_t seed = 13;
  std::size_t bpe_merges = 2000;
  std::size_t vocab_min_count = 1;
  /// Stop after this many validation passes without improvement; 0 = never.
  int early_stopping_patience = 0;
  /// Restore the weights of the best validation pass at the end.
  bool keep_best = true;
  std::optional<float> dropout;  // overrides the encoder spec

  static QATrainConfig paper();
  void validate() const;
  nlohmann::json to_json() const;
};

struct ValidationRecord {
  int epoch = 0;
  double loss = 0.0;
  double best_so_far = 0.0;
};

struct QATrainResult {
  QAModel model;
  std::vector<ValidationRecord> history;
  std::vector<double> train_loss;  // mean per epoch
  Diagnostics diagnostics;
};

/// Called after every epoch; return false to stop training.
using EpochCallback = std::function<bool(int epoch, const QAModel& model)>;

/// Each question is paired with its top k_train paragraphs from its own
/// document. Without `init`, a tokenizer and vocabulary are fit on `train`.
QATrainResult train_qa(const corpus::Dataset& train, const corpus::Dataset* val,
                       const QATrainConfig& config, const EncoderSpec& spec,
                       std::optional<QAModel> init = std::nullopt,
                       const EpochCallback& on_epoch = {});

/// Mean shared-norm loss over a dataset (no gradients).
double dataset_loss(const QAModel& model, const corpus::Dataset& data, std::size_t k,
                    Diagnostics* diagnostics = nullptr);

/// Predictions keyed by question id; unanswerable predictions are "".
std::map<std::string, std::string> predict_dataset(const QAModel& model,
                                                   const corpus::Dataset& data,
                                                   const retrieval::RetrievalConfig& retrieval,
                                                   const DecodeConfig& decode = {});

/// Tokenizer fit on questions and paragraph text.
bpe::Tokenizer fit_tokenizer(const corpus::Dataset& data, std::size_t merges);

}  // namespace qna::qa
