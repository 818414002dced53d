#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qna/text.hpp"

namespace qna::syntax {

/// A sentence and its byte offset in the enclosing text.
struct Sentence {
  std::string text;
  std::size_t offset = 0;
};

enum class EntityType { Person, Place, Date, Number, Organization, Other };

std::string_view entity_type_name(EntityType t);

/// Inclusive token ranges within one sentence.
struct Entity {
  std::size_t first = 0;
  std::size_t last = 0;
  EntityType type = EntityType::Other;
};

struct NounChunk {
  std::size_t first = 0;
  std::size_t last = 0;
};

/// Incoming dependency arc of a token; head == -1 marks the root.
struct Arc {
  int head = -1;
  std::string label;
};

struct Analysis {
  std::string sentence;
  std::vector<text::Token> tokens;
  std::vector<std::string> pos;
  std::vector<Entity> entities;
  std::vector<NounChunk> noun_chunks;
  std::vector<Arc> arcs;
};

/// Syntactic analysis backend. Token offsets refer to byte positions in the
/// analysed sentence and results are deterministic for a fixed input.
/// Instances may keep internal state: use one per thread.
class SyntaxProvider {
 public:
  virtual ~SyntaxProvider() = default;
  virtual std::string name() const = 0;
  virtual std::string version() const = 0;
  virtual std::vector<Sentence> segment(std::string_view text) = 0;
  virtual Analysis analyze(std::string_view sentence) = 0;
};

}  // namespace qna::syntax
