#include "qna/vocab.hpp"

#include <map>
#include <stdexcept>

namespace qna {

void ModelVocab::add(int token_id) {
  if (index_.count(token_id)) return;
  index_.emplace(token_id, kNumReserved + static_cast<int>(token_ids_.size()));
  token_ids_.push_back(token_id);
}

ModelVocab ModelVocab::build(const std::vector<std::vector<int>>& sequences, std::size_t min_count,
                             std::span<const int> always) {
  ModelVocab v;
  for (int id : always) v.add(id);
  std::unordered_map<int, std::size_t> counts;
  std::vector<int> order;
  for (const auto& seq : sequences) {
    for (int id : seq) {
      if (counts[id]++ == 0) order.push_back(id);
    }
  }
  for (int id : order)
    if (counts[id] >= min_count) v.add(id);
  return v;
}

int ModelVocab::to_model(int token_id) const {
  auto it = index_.find(token_id);
  return it == index_.end() ? kUnk : it->second;
}

int ModelVocab::to_token(int model_id) const {
  if (model_id < kNumReserved) return -1;
  const auto i = static_cast<std::size_t>(model_id - kNumReserved);
  if (i >= token_ids_.size()) throw std::out_of_range("model id out of range");
  return token_ids_[i];
}

nlohmann::json ModelVocab::to_json() const { return token_ids_; }

ModelVocab ModelVocab::from_json(const nlohmann::json& j) {
  ModelVocab v;
  for (const auto& id : j) v.add(id.get<int>());
  return v;
}

}  // namespace qna
