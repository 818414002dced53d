#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace qna {

/// Counted, non-fatal warnings collected while loading or processing data.
struct Diagnostics {
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> messages;
  std::size_t max_messages = 50;

  void warn(const std::string& kind, const std::string& message) {
    ++counts[kind];
    if (messages.size() < max_messages) messages.push_back(kind + ": " + message);
  }

  std::size_t count(const std::string& kind) const {
    auto it = counts.find(kind);
    return it == counts.end() ? 0 : it->second;
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : counts) n += c;
    return n;
  }

  void merge(const Diagnostics& other) {
    for (const auto& [k, c] : other.counts) counts[k] += c;
    for (const auto& m : other.messages)
      if (messages.size() < max_messages) messages.push_back(m);
  }
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qna
