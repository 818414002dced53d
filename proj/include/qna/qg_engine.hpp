#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qna/bpe.hpp"
#include "qna/checkpoint.hpp"
#include "qna/corpus.hpp"
#include "qna/diagnostics.hpp"
#include "qna/nn/layers.hpp"
#include "qna/syntax.hpp"
#include "qna/vocab.hpp"

namespace qna::qg {

enum class TrainingRegime { Standard, RuleMimic, Augmented };

std::string regime_name(TrainingRegime regime);
TrainingRegime parse_regime(const std::string& name);

struct QGModelConfig {
  std::string preset = "paper";
  int enc_layers = 4;
  int dec_layers = 4;
  int d_model = 512;
  int ff_dim = 2048;
  int heads = 8;
  bool copy_attention = true;
  bool positional_encoding = true;
  float dropout = 0.1f;
  float label_smoothing = 0.0f;
  int max_source_len = 256;

  static QGModelConfig paper();
  static QGModelConfig desk();
  static QGModelConfig preset_named(const std::string& name);
  void validate() const;
  nlohmann::json to_json() const;
  static QGModelConfig from_json(const nlohmann::json& j);
};

struct QGTrainConfig {
  std::size_t batch_tokens = 4096;
  std::int64_t max_steps = 100000;
  std::int64_t validate_every = 200;
  int warmup_steps = 8000;
  double lr = 2.0;
  std::string schedule = "noam";
  float beta1 = 0.9f;
  float beta2 = 0.998f;
  float adam_eps = 1e-9f;
  float max_grad_norm = 0.0f;
  /// Validations without improvement before stopping.
  int patience = 1;
  std::uint32_t seed = 7;
  std::size_t bpe_merges = 4000;
  std::size_t vocab_min_count = 1;

  static QGTrainConfig paper();
  static QGTrainConfig desk();
  void validate() const;
  nlohmann::json to_json() const;
};

struct BeamConfig {
  std::size_t beam_size = 5;
  std::size_t max_decode_len = 40;
  double length_penalty = 0.0;
  /// Return the best hypothesis over every width 1..beam_size, so a wider
  /// beam never scores below a narrower one.
  bool monotone = true;

  void validate() const;
};

struct GeneratedQuestion {
  std::string question;
  double log_prob = 0.0;  // sum of token log-probabilities, EOS included
  std::size_t input_index = 0;
  bool finished = true;   // false if cut at max_decode_len
  bool failed = false;    // generation raised an error; question is empty
};

/// Source side of one input: model ids for embedding plus extended ids for
/// copying source tokens that are outside the model vocabulary.
struct EncodedSource {
  std::vector<int> ids;        // model ids; out-of-vocabulary -> kUnk
  std::vector<int> copy_ids;   // extended ids: model id or vocab.size() + k
  std::vector<int> oov_tokens; // tokenizer id of extended slot k
  bool truncated = false;
};

class QGModel {
 public:
  QGModel(QGModelConfig config, bpe::Tokenizer tokenizer, ModelVocab vocab, std::uint32_t seed);
  QGModel(const QGModel& other);
  QGModel& operator=(const QGModel&) = delete;
  QGModel(QGModel&&) noexcept;
  QGModel& operator=(QGModel&&) noexcept;
  ~QGModel();

  static QGModel from_archive(const checkpoint::Archive& archive);
  static QGModel load(const std::filesystem::path& path);
  checkpoint::Archive to_archive() const;
  void save(const std::filesystem::path& path) const;

  EncodedSource encode_source(const corpus::QGInput& input) const;
  EncodedSource encode_source_text(std::string_view text) const;
  /// Extended target ids followed by EOS.
  std::vector<int> encode_target(std::string_view question, const EncodedSource& source) const;
  std::string decode_target(const std::vector<int>& ids, const EncodedSource& source) const;

  nn::Tensor encode(const EncodedSource& source, bool training, nn::Rng& rng) const;
  /// Log-probabilities over the extended vocabulary for each decoder input
  /// position; `inputs` starts with BOS.
  nn::Tensor decode(const nn::Tensor& memory, const EncodedSource& source, const std::vector<int>& inputs,
                    bool training, nn::Rng& rng, bool last_only = false) const;
  /// Summed token negative log-likelihood (with label smoothing if set).
  nn::Tensor loss(const EncodedSource& source, const std::vector<int>& target, bool training,
                  nn::Rng& rng) const;

  /// Teacher-forced log-probability of `question` (EOS included).
  double sequence_log_prob(const corpus::QGInput& input, std::string_view question) const;

  GeneratedQuestion generate(const corpus::QGInput& input, const BeamConfig& beam) const;

  nn::ParamList params();
  const QGModelConfig& config() const { return config_; }
  const bpe::Tokenizer& tokenizer() const { return tokenizer_; }
  const ModelVocab& vocab() const { return vocab_; }
  void set_dropout(float p);

  /// Stored in the checkpoint header: regime, parent lineage, training
  /// configuration and history.
  nlohmann::json metadata = nlohmann::json::object();

 private:
  struct Net;
  void build(std::uint32_t seed);
  nn::Tensor output_head(const nn::Tensor& y, const nn::Tensor& memory, const EncodedSource& source) const;
  std::vector<int> target_ids_to_tokens(const std::vector<int>& ids, const EncodedSource& source) const;

  QGModelConfig config_;
  bpe::Tokenizer tokenizer_;
  ModelVocab vocab_;
  std::unique_ptr<Net> net_;
};

struct QGValidationRecord {
  std::int64_t step = 0;
  double loss = 0.0;  // per target token
  double best_so_far = 0.0;
};

struct QGTrainResult {
  QGModel model;
  std::vector<QGValidationRecord> history;
  std::int64_t steps = 0;
  Diagnostics diagnostics;
};

/// Called at every validation point; return false to stop.
using StepCallback = std::function<bool(std::int64_t step, const QGModel& model)>;

struct QGTrainInputs {
  std::vector<corpus::QGExample> train;
  std::vector<corpus::QGExample> val;
  /// Extra examples used only to fit the tokenizer and vocabulary.
  std::vector<corpus::QGExample> vocab_only;
};

/// Augmented requires `init` trained under RuleMimic; the result records the
/// parent's regime and weight fingerprint. With an init, its tokenizer and
/// vocabulary are kept.
QGTrainResult train_qg(const QGTrainInputs& inputs, TrainingRegime regime, std::optional<QGModel> init,
                       const QGModelConfig& model_config, const QGTrainConfig& config,
                       const StepCallback& on_validate = {});

/// Mean per-token loss (no gradients).
double dataset_loss(const QGModel& model, const std::vector<corpus::QGExample>& examples);

std::vector<GeneratedQuestion> generate_questions(const std::vector<corpus::QGInput>& inputs,
                                                  const QGModel& model, const BeamConfig& beam,
                                                  Diagnostics* diagnostics = nullptr);

/// Heavily simplified rule-based generator: wh-substitution of the marked
/// span plus subject-auxiliary inversion for copula/auxiliary sentences.
std::optional<std::string> toy_rule_generate(const corpus::QGInput& input, syntax::SyntaxProvider& provider);

/// Wh-words the toy generator may emit.
const std::vector<std::string>& wh_words();

}  // namespace qna::qg
