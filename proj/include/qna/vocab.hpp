#pragma once

#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace qna {

/// Dense model ids over the tokenizer ids seen in training. Ids below
/// kNumReserved are model-only symbols.
class ModelVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kCls = 4;
  static constexpr int kSep = 5;
  static constexpr int kNumReserved = 6;

  ModelVocab() = default;

  /// Tokenizer ids occurring at least `min_count` times, ordered by first
  /// occurrence; `always` ids are added first regardless of count.
  static ModelVocab build(const std::vector<std::vector<int>>& sequences, std::size_t min_count = 1,
                          std::span<const int> always = {});

  int to_model(int token_id) const;
  /// -1 for reserved ids.
  int to_token(int model_id) const;
  bool contains(int token_id) const { return index_.count(token_id) > 0; }
  std::size_t size() const { return kNumReserved + token_ids_.size(); }

  nlohmann::json to_json() const;
  static ModelVocab from_json(const nlohmann::json& j);

 private:
  void add(int token_id);

  std::vector<int> token_ids_;
  std::unordered_map<int, int> index_;
};

}  // namespace qna
