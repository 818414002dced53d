#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qna::bpe {

/// Byte-level BPE in the GPT-2 style. Every byte has a base symbol, so any
/// input encodes and decode(encode(s)) == s. Registered special strings
/// (the answer markers) are matched before pre-tokenization and always map
/// to a single id.
class Tokenizer {
 public:
  Tokenizer();

  /// Learns `num_merges` merges (fewer if no pair occurs at least
  /// `min_pair_count` times). Ties are broken by byte order.
  static Tokenizer train(const std::vector<std::string>& texts, std::size_t num_merges,
                         const std::vector<std::string>& specials, std::size_t min_pair_count = 2);

  /// GPT-2 `vocab.json` (token -> id, byte-to-unicode mapped) and
  /// `merges.txt` ("#version" header, one "a b" pair per line).
  static Tokenizer from_gpt2(std::string_view vocab_json, std::string_view merges_txt,
                             const std::vector<std::string>& specials);
  static Tokenizer load(const std::filesystem::path& vocab_json,
                        const std::filesystem::path& merges_txt,
                        const std::vector<std::string>& specials);

  std::string vocab_json() const;
  std::string merges_txt() const;
  void save(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) const;

  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  /// GPT-2 pre-tokenization of plain text (no special handling).
  static std::vector<std::string> pretokenize(std::string_view text);

  int special_id(std::string_view special) const;
  bool is_special(int id) const;
  const std::vector<std::string>& specials() const { return specials_; }
  std::size_t vocab_size() const { return id_to_bytes_.size(); }
  std::size_t num_merges() const { return merges_.size(); }
  const std::string& token_bytes(int id) const { return id_to_bytes_.at(static_cast<std::size_t>(id)); }

 private:
  int add_token(const std::string& bytes);
  void add_merge(int a, int b);
  void register_specials(const std::vector<std::string>& specials);
  std::vector<int> encode_word(std::string_view word) const;

  std::vector<std::string> id_to_bytes_;
  std::unordered_map<std::string, int> bytes_to_id_;
  std::array<int, 256> byte_ids_{};
  std::vector<std::pair<int, int>> merges_;
  std::unordered_map<std::uint64_t, std::pair<int, int>> merge_rank_;  // pair -> (rank, merged id)
  std::vector<std::string> specials_;
  std::unordered_map<int, std::size_t> special_index_;
};

/// GPT-2 byte <-> printable unicode mapping used in vocabulary files.
std::string bytes_to_unicode(std::string_view bytes);
std::string unicode_to_bytes(std::string_view text);

}  // namespace qna::bpe
