#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qna/nn/layers.hpp"

namespace qna::checkpoint {

inline constexpr int kFormatVersion = 1;

/// Self-describing weight archive:
///   "QNACKPT\n" | u64 header length | header JSON | float32 tensor data
/// The header carries "kind", "format_version", model and training
/// configuration, tokenizer tables and a tensor index.
struct Archive {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, nn::Matrix>> tensors;

  const nn::Matrix& tensor(const std::string& name) const;
};

std::string serialize(const Archive& archive);
Archive deserialize(std::string_view bytes);

void save(const Archive& archive, const std::filesystem::path& path);
Archive load(const std::filesystem::path& path);

/// Reads only the header.
nlohmann::json peek_header(const std::filesystem::path& path);

void store_params(Archive& archive, const nn::ParamList& params);
/// Names and shapes must match exactly.
void restore_params(const Archive& archive, const nn::ParamList& params);

/// FNV-1a over the tensor payload, hex encoded; identifies a set of weights.
std::string fingerprint(const Archive& archive);

}  // namespace qna::checkpoint
