#include "qna/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qna/text.hpp"

namespace qna::bpe {

namespace {

std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

struct ByteMap {
  std::array<std::uint32_t, 256> to_cp{};
  std::unordered_map<std::uint32_t, unsigned char> from_cp;

  ByteMap() {
    std::vector<int> printable;
    for (int b = '!'; b <= '~'; ++b) printable.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) printable.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) printable.push_back(b);
    std::array<bool, 256> direct{};
    for (int b : printable) direct[static_cast<std::size_t>(b)] = true;
    std::uint32_t n = 0;
    for (int b = 0; b < 256; ++b) {
      const std::uint32_t cp = direct[static_cast<std::size_t>(b)] ? static_cast<std::uint32_t>(b) : 256 + n++;
      to_cp[static_cast<std::size_t>(b)] = cp;
      from_cp[cp] = static_cast<unsigned char>(b);
    }
  }
};

const ByteMap& byte_map() {
  static const ByteMap m;
  return m;
}

enum class CharClass { Letter, Number, Space, Other };

CharClass classify(std::string_view s, std::size_t i, std::size_t* len) {
  const auto c = text::decode_utf8(s, i);
  *len = c.length;
  if (c.length == 1 && c.value >= 0x80) return CharClass::Letter;  // stray byte
  if (c.value >= '0' && c.value <= '9') return CharClass::Number;
  if (text::is_unicode_space(c.value)) return CharClass::Space;
  if (c.value < 0x80) {
    const bool alpha = (c.value >= 'a' && c.value <= 'z') || (c.value >= 'A' && c.value <= 'Z');
    return alpha ? CharClass::Letter : CharClass::Other;
  }
  return text::is_word_char(c.value) ? CharClass::Letter : CharClass::Other;
}

std::size_t run_of(std::string_view s, std::size_t i, CharClass cls) {
  while (i < s.size()) {
    std::size_t len = 0;
    if (classify(s, i, &len) != cls) break;
    i += len;
  }
  return i;
}

}  // namespace

std::string bytes_to_unicode(std::string_view bytes) {
  std::string out;
  for (unsigned char b : bytes) text::append_utf8(out, byte_map().to_cp[b]);
  return out;
}

std::string unicode_to_bytes(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = text::decode_utf8(s, i);
    auto it = byte_map().from_cp.find(c.value);
    if (it == byte_map().from_cp.end())
      throw std::invalid_argument("character outside the byte-level alphabet in BPE vocabulary");
    out += static_cast<char>(it->second);
    i += c.length;
  }
  return out;
}

std::vector<std::string> Tokenizer::pretokenize(std::string_view s) {
  static constexpr std::array<std::string_view, 7> kContractions = {"'s", "'t", "'re", "'ve",
                                                                    "'m", "'ll", "'d"};
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '\'') {
      bool matched = false;
      for (auto c : kContractions) {
        if (s.substr(i, c.size()) == c) {
          out.emplace_back(c);
          i += c.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    std::size_t len = 0;
    const CharClass cls = classify(s, i, &len);
    if (cls == CharClass::Space) {
      const std::size_t j = run_of(s, i, CharClass::Space);
      if (j == s.size()) {
        out.emplace_back(s.substr(i, j - i));
        i = j;
        continue;
      }
      // Leave the final whitespace char to prefix the next token.
      std::size_t last = i;
      for (std::size_t k = i; k < j;) {
        std::size_t l = 0;
        classify(s, k, &l);
        last = k;
        k += l;
      }
      if (last > i) {
        out.emplace_back(s.substr(i, last - i));
        i = last;
        continue;
      }
      if (s[i] == ' ') {
        std::size_t nl = 0;
        const CharClass next = classify(s, i + 1, &nl);
        const std::size_t end = run_of(s, i + 1, next);
        out.emplace_back(s.substr(i, end - i));
        i = end;
      } else {
        out.emplace_back(s.substr(i, len));
        i += len;
      }
      continue;
    }
    const std::size_t end = run_of(s, i, cls);
    out.emplace_back(s.substr(i, end - i));
    i = end;
  }
  return out;
}

Tokenizer::Tokenizer() {
  for (int b = 0; b < 256; ++b) byte_ids_[static_cast<std::size_t>(b)] = -1;
}

int Tokenizer::add_token(const std::string& bytes) {
  auto it = bytes_to_id_.find(bytes);
  if (it != bytes_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_bytes_.size());
  id_to_bytes_.push_back(bytes);
  bytes_to_id_.emplace(bytes, id);
  if (bytes.size() == 1) byte_ids_[static_cast<unsigned char>(bytes[0])] = id;
  return id;
}

void Tokenizer::add_merge(int a, int b) {
  const int merged = add_token(id_to_bytes_[static_cast<std::size_t>(a)] +
                               id_to_bytes_[static_cast<std::size_t>(b)]);
  const auto key = pair_key(a, b);
  if (merge_rank_.count(key)) return;
  merge_rank_.emplace(key, std::make_pair(static_cast<int>(merges_.size()), merged));
  merges_.emplace_back(a, b);
}

void Tokenizer::register_specials(const std::vector<std::string>& specials) {
  for (const auto& sp : specials) {
    if (sp.empty()) throw std::invalid_argument("empty special token");
    if (std::find(specials_.begin(), specials_.end(), sp) != specials_.end()) continue;
    // Specials live in their own id range even if the bytes exist as a merge.
    const int id = static_cast<int>(id_to_bytes_.size());
    id_to_bytes_.push_back(sp);
    special_index_.emplace(id, specials_.size());
    specials_.push_back(sp);
  }
}

Tokenizer Tokenizer::train(const std::vector<std::string>& texts, std::size_t num_merges,
                           const std::vector<std::string>& specials, std::size_t min_pair_count) {
  Tokenizer tok;
  for (int b = 0; b < 256; ++b) tok.add_token(std::string(1, static_cast<char>(b)));

  // Word frequencies over pre-tokenized text, with specials cut out.
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    std::string_view rest = t;
    while (!rest.empty()) {
      std::size_t best = rest.size(), best_len = 0;
      for (const auto& sp : specials) {
        const auto p = rest.find(sp);
        if (p != std::string_view::npos && p < best) {
          best = p;
          best_len = sp.size();
        }
      }
      for (auto& w : pretokenize(rest.substr(0, best))) ++freq[w];
      if (best == rest.size()) break;
      rest = rest.substr(best + best_len);
    }
  }
  std::vector<std::vector<int>> words;
  std::vector<std::size_t> counts;
  for (const auto& [w, c] : freq) {
    std::vector<int> sym;
    for (unsigned char b : w) sym.push_back(tok.byte_ids_[b]);
    words.push_back(std::move(sym));
    counts.push_back(c);
  }

  for (std::size_t m = 0; m < num_merges; ++m) {
    std::unordered_map<std::uint64_t, std::size_t> pair_counts;
    for (std::size_t w = 0; w < words.size(); ++w)
      for (std::size_t i = 0; i + 1 < words[w].size(); ++i)
        pair_counts[pair_key(words[w][i], words[w][i + 1])] += counts[w];
    std::uint64_t best_key = 0;
    std::size_t best_count = 0;
    for (const auto& [key, c] : pair_counts) {
      if (c < best_count || c < min_pair_count) continue;
      if (c > best_count) {
        best_key = key;
        best_count = c;
        continue;
      }
      auto bytes_of = [&](std::uint64_t k) {
        return std::make_pair(tok.id_to_bytes_[k >> 32], tok.id_to_bytes_[k & 0xFFFFFFFFu]);
      };
      if (bytes_of(key) < bytes_of(best_key)) best_key = key;
    }
    if (best_count == 0) break;
    const int a = static_cast<int>(best_key >> 32);
    const int b = static_cast<int>(best_key & 0xFFFFFFFFu);
    tok.add_merge(a, b);
    const int merged = tok.merge_rank_.at(best_key).second;
    for (auto& w : words) {
      std::vector<int> next;
      next.reserve(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == a && w[i + 1] == b) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = std::move(next);
    }
  }
  tok.register_specials(specials);
  return tok;
}

Tokenizer Tokenizer::from_gpt2(std::string_view vocab_json, std::string_view merges_txt,
                               const std::vector<std::string>& specials) {
  Tokenizer tok;
  const auto vocab = nlohmann::json::parse(vocab_json);
  if (!vocab.is_object()) throw std::invalid_argument("vocab.json must be an object");
  std::vector<std::pair<int, std::string>> entries;
  for (auto it = vocab.begin(); it != vocab.end(); ++it)
    entries.emplace_back(it.value().get<int>(), it.key());
  std::sort(entries.begin(), entries.end());
  for (const auto& [id, token] : entries) {
    if (std::find(specials.begin(), specials.end(), token) != specials.end()) continue;
    std::string bytes;
    try {
      bytes = unicode_to_bytes(token);
    } catch (const std::invalid_argument&) {
      bytes = token;  // added tokens such as <|endoftext|> are stored verbatim
    }
    if (static_cast<std::size_t>(id) != tok.id_to_bytes_.size()) {
      // Pad gaps so file ids stay stable.
      while (tok.id_to_bytes_.size() < static_cast<std::size_t>(id))
        tok.id_to_bytes_.push_back("<gap" + std::to_string(tok.id_to_bytes_.size()) + ">");
    }
    tok.add_token(bytes);
  }
  for (int b = 0; b < 256; ++b)
    if (tok.byte_ids_[static_cast<std::size_t>(b)] < 0) tok.add_token(std::string(1, static_cast<char>(b)));

  std::istringstream in{std::string(merges_txt)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("#version", 0) == 0) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw std::invalid_argument("malformed merges line: " + line);
    const int a = tok.add_token(unicode_to_bytes(line.substr(0, sp)));
    const int b = tok.add_token(unicode_to_bytes(line.substr(sp + 1)));
    tok.add_merge(a, b);
  }
  tok.register_specials(specials);
  return tok;
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_path,
                          const std::filesystem::path& merges_path,
                          const std::vector<std::string>& specials) {
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  return from_gpt2(slurp(vocab_path), slurp(merges_path), specials);
}

std::string Tokenizer::vocab_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t id = 0; id < id_to_bytes_.size(); ++id) {
    const bool special = special_index_.count(static_cast<int>(id)) > 0;
    j[special ? id_to_bytes_[id] : bytes_to_unicode(id_to_bytes_[id])] = id;
  }
  return j.dump();
}

std::string Tokenizer::merges_txt() const {
  std::string out = "#version: 0.2\n";
  for (const auto& [a, b] : merges_) {
    out += bytes_to_unicode(id_to_bytes_[static_cast<std::size_t>(a)]);
    out += ' ';
    out += bytes_to_unicode(id_to_bytes_[static_cast<std::size_t>(b)]);
    out += '\n';
  }
  return out;
}

void Tokenizer::save(const std::filesystem::path& vocab_path,
                     const std::filesystem::path& merges_path) const {
  std::ofstream v(vocab_path, std::ios::binary), m(merges_path, std::ios::binary);
  if (!v || !m) throw std::runtime_error("cannot write tokenizer files");
  v << vocab_json();
  m << merges_txt();
}

std::vector<int> Tokenizer::encode_word(std::string_view word) const {
  std::vector<int> sym;
  sym.reserve(word.size());
  for (unsigned char b : word) sym.push_back(byte_ids_[b]);
  while (sym.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    int best_merged = -1;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      auto it = merge_rank_.find(pair_key(sym[i], sym[i + 1]));
      if (it != merge_rank_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_merged = it->second.second;
        best_i = i;
      }
    }
    if (best_merged < 0) break;
    const int a = sym[best_i], b = sym[best_i + 1];
    std::vector<int> next;
    next.reserve(sym.size());
    for (std::size_t i = 0; i < sym.size(); ++i) {
      if (i + 1 < sym.size() && sym[i] == a && sym[i + 1] == b) {
        next.push_back(best_merged);
        ++i;
      } else {
        next.push_back(sym[i]);
      }
    }
    sym = std::move(next);
  }
  return sym;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  std::string_view rest = text;
  while (!rest.empty()) {
    std::size_t best = rest.size(), which = specials_.size();
    for (std::size_t s = 0; s < specials_.size(); ++s) {
      const auto p = rest.find(specials_[s]);
      if (p != std::string_view::npos && p < best) {
        best = p;
        which = s;
      }
    }
    for (const auto& w : pretokenize(rest.substr(0, best))) {
      const auto sub = encode_word(w);
      ids.insert(ids.end(), sub.begin(), sub.end());
    }
    if (which == specials_.size()) break;
    ids.push_back(special_id(specials_[which]));
    rest = rest.substr(best + specials_[which].size());
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_bytes_.size())
      throw std::out_of_range("token id out of range: " + std::to_string(id));
    out += id_to_bytes_[static_cast<std::size_t>(id)];
  }
  return out;
}

int Tokenizer::special_id(std::string_view special) const {
  for (const auto& [id, idx] : special_index_)
    if (specials_[idx] == special) return id;
  throw std::out_of_range("unregistered special token: " + std::string(special));
}

bool Tokenizer::is_special(int id) const { return special_index_.count(id) > 0; }

}  // namespace qna::bpe
