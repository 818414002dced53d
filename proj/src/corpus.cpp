#include "qna/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace qna::corpus {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Paragraphs and documents

std::string Paragraph::span_text(std::size_t first, std::size_t last) const {
  if (first > last || last >= char_offsets.size())
    throw std::out_of_range("span outside paragraph " + para_id);
  const auto b = char_offsets[first].begin;
  const auto e = char_offsets[last].end;
  return raw_text.substr(b, e - b);
}

Paragraph make_paragraph(std::string para_id, std::string raw_text) {
  Paragraph p;
  p.para_id = std::move(para_id);
  p.raw_text = std::move(raw_text);
  for (auto& t : text::tokenize_words(p.raw_text)) {
    p.char_offsets.push_back({t.begin, t.end});
    p.tokens.push_back(std::move(t.text));
  }
  return p;
}

const Document* Dataset::find_document(std::string_view doc_id) const {
  for (const auto& d : documents)
    if (d.doc_id == doc_id) return &d;
  return nullptr;
}

bool QGInput::has_markers() const {
  return std::find(sentence_tokens.begin(), sentence_tokens.end(), kAnswerOpen) !=
         sentence_tokens.end();
}

std::string QGInput::text() const { return text::join(sentence_tokens, " "); }

std::string QGInput::answer_text() const {
  auto open = std::find(sentence_tokens.begin(), sentence_tokens.end(), kAnswerOpen);
  auto close = std::find(sentence_tokens.begin(), sentence_tokens.end(), kAnswerClose);
  if (open == sentence_tokens.end() || close == sentence_tokens.end() || close < open) return {};
  if (answer_char_span && answer_char_span->end <= sentence.size())
    return sentence.substr(answer_char_span->begin, answer_char_span->size());
  return text::join(std::vector<std::string>(open + 1, close), " ");
}

std::vector<std::string> QGExample::target_tokens() const {
  return text::token_strings(text::tokenize_words(question));
}

// ---------------------------------------------------------------------------
// Markers

std::vector<std::string> insert_markers(const std::vector<std::string>& tokens, std::size_t first,
                                        std::size_t last) {
  if (first > last || last >= tokens.size())
    throw std::invalid_argument("marker span outside token list");
  std::vector<std::string> out;
  out.reserve(tokens.size() + 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i == first) out.emplace_back(kAnswerOpen);
    out.push_back(tokens[i]);
    if (i == last) out.emplace_back(kAnswerClose);
  }
  return out;
}

std::vector<std::string> strip_markers(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens)
    if (t != kAnswerOpen && t != kAnswerClose) out.push_back(t);
  return out;
}

namespace {

const std::string kOpenPrefix = std::string(kAnswerOpen) + " ";
const std::string kCloseSuffix = " " + std::string(kAnswerClose);

}  // namespace

std::string insert_markers(std::string_view sentence, CharSpan span) {
  if (span.begin >= span.end || span.end > sentence.size())
    throw std::invalid_argument("marker span out of bounds or empty");
  if (sentence.find(kAnswerOpen) != std::string_view::npos ||
      sentence.find(kAnswerClose) != std::string_view::npos)
    throw std::invalid_argument("sentence already contains an answer marker");
  std::string out;
  out.reserve(sentence.size() + kOpenPrefix.size() + kCloseSuffix.size());
  out.append(sentence.substr(0, span.begin));
  out += kOpenPrefix;
  out.append(sentence.substr(span.begin, span.size()));
  out += kCloseSuffix;
  out.append(sentence.substr(span.end));
  return out;
}

std::string strip_markers(std::string_view marked) {
  const auto open = marked.find(kOpenPrefix);
  if (open == std::string_view::npos) return std::string(marked);
  const auto close = marked.find(kCloseSuffix, open + kOpenPrefix.size());
  if (close == std::string_view::npos) throw std::invalid_argument("unbalanced answer markers");
  std::string out;
  out.append(marked.substr(0, open));
  out.append(marked.substr(open + kOpenPrefix.size(), close - open - kOpenPrefix.size()));
  out.append(marked.substr(close + kCloseSuffix.size()));
  return out;
}

QGInput make_qg_input(std::string_view sentence, CharSpan span, int sentence_index,
                      bool* expanded) {
  if (span.begin >= span.end || span.end > sentence.size())
    throw std::invalid_argument("answer span empty or outside sentence");
  const auto tokens = text::tokenize_words(sentence);
  std::size_t first = tokens.size(), last = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].end > span.begin && tokens[i].begin < span.end) {
      first = std::min(first, i);
      last = i;
    }
  }
  if (first == tokens.size()) throw std::invalid_argument("answer span covers no tokens");
  const CharSpan snapped{tokens[first].begin, tokens[last].end};
  if (expanded) *expanded = snapped.begin < span.begin || snapped.end > span.end;

  QGInput in;
  in.sentence = std::string(sentence);
  in.source_sentence_index = sentence_index;
  in.answer_char_span = snapped;
  in.sentence_tokens = insert_markers(text::token_strings(tokens), first, last);
  return in;
}

QGInput make_unmarked_input(std::string_view sentence, int sentence_index) {
  QGInput in;
  in.sentence = std::string(sentence);
  in.source_sentence_index = sentence_index;
  in.sentence_tokens = text::token_strings(text::tokenize_words(sentence));
  return in;
}

// ---------------------------------------------------------------------------
// Chunking

std::vector<Paragraph> chunk_document(const std::vector<std::string>& tokens,
                                      std::size_t chunk_size, std::string_view id_prefix) {
  if (chunk_size == 0) throw std::invalid_argument("chunk_size must be >= 1");
  std::vector<Paragraph> out;
  for (std::size_t start = 0; start < tokens.size(); start += chunk_size) {
    const std::size_t stop = std::min(tokens.size(), start + chunk_size);
    Paragraph p;
    p.para_id = std::string(id_prefix) + std::to_string(out.size());
    for (std::size_t i = start; i < stop; ++i) {
      if (i > start) p.raw_text += ' ';
      const std::size_t b = p.raw_text.size();
      p.raw_text += tokens[i];
      p.char_offsets.push_back({b, p.raw_text.size()});
      p.tokens.push_back(tokens[i]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Paragraph> chunk_document(std::string_view raw_text,
                                      const std::vector<text::Token>& tokens,
                                      std::size_t chunk_size, std::string_view id_prefix) {
  if (chunk_size == 0) throw std::invalid_argument("chunk_size must be >= 1");
  std::vector<Paragraph> out;
  for (std::size_t start = 0; start < tokens.size(); start += chunk_size) {
    const std::size_t stop = std::min(tokens.size(), start + chunk_size);
    const std::size_t base = tokens[start].begin;
    Paragraph p;
    p.para_id = std::string(id_prefix) + std::to_string(out.size());
    p.raw_text = std::string(raw_text.substr(base, tokens[stop - 1].end - base));
    for (std::size_t i = start; i < stop; ++i) {
      p.tokens.push_back(tokens[i].text);
      p.char_offsets.push_back({tokens[i].begin - base, tokens[i].end - base});
    }
    out.push_back(std::move(p));
  }
  return out;
}

Document document_from_text(std::string doc_id, std::string_view raw_text,
                             std::size_t chunk_size) {
  Document doc;
  doc.paragraphs = chunk_document(raw_text, text::tokenize_words(raw_text), chunk_size,
                                  doc_id + "-p");
  doc.doc_id = std::move(doc_id);
  return doc;
}

// ---------------------------------------------------------------------------
// SQuAD

namespace {

/// Maps a character span to an inclusive token span when both ends fall on
/// token boundaries (after trimming surrounding whitespace).
std::optional<std::pair<std::size_t, std::size_t>> align_exact(const Paragraph& p,
                                                               std::size_t begin,
                                                               std::size_t end) {
  while (begin < end && std::isspace(static_cast<unsigned char>(p.raw_text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(p.raw_text[end - 1]))) --end;
  if (begin >= end) return std::nullopt;
  std::optional<std::size_t> first, last;
  for (std::size_t i = 0; i < p.char_offsets.size(); ++i) {
    if (p.char_offsets[i].begin == begin) first = i;
    if (p.char_offsets[i].end == end) last = i;
  }
  if (!first || !last || *first > *last) return std::nullopt;
  return std::make_pair(*first, *last);
}

/// Inclusive token span of all tokens overlapping [begin, end).
std::optional<std::pair<std::size_t, std::size_t>> align_overlap(
    const std::vector<text::Token>& tokens, std::size_t begin, std::size_t end) {
  std::optional<std::size_t> first;
  std::size_t last = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].end > begin && tokens[i].begin < end) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first) return std::nullopt;
  return std::make_pair(*first, last);
}

std::string record_name(std::size_t a, std::size_t p, std::size_t q, const json& qa) {
  std::string name = "data[" + std::to_string(a) + "].paragraphs[" + std::to_string(p) + "]";
  if (q != static_cast<std::size_t>(-1)) {
    name += ".qas[" + std::to_string(q) + "]";
    if (qa.is_object() && qa.contains("id") && qa["id"].is_string())
      name += " (id=" + qa["id"].get<std::string>() + ")";
  }
  return name;
}

}  // namespace

Dataset parse_squad_json(std::string_view json_text, SquadVersion version) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed SQuAD JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("data") || !root["data"].is_array())
    throw ParseError("malformed SQuAD JSON: missing top-level \"data\" array");

  Dataset ds;
  const auto& data = root["data"];
  for (std::size_t a = 0; a < data.size(); ++a) {
    const auto& article = data[a];
    if (!article.is_object() || !article.contains("paragraphs") ||
        !article["paragraphs"].is_array())
      throw ParseError("malformed SQuAD record data[" + std::to_string(a) +
                       "]: missing \"paragraphs\" array");
    Document doc;
    if (article.contains("title") && article["title"].is_string())
      doc.title = article["title"].get<std::string>();
    doc.doc_id = doc.title ? *doc.title : "doc" + std::to_string(a);
    if (ds.find_document(doc.doc_id)) doc.doc_id += "#" + std::to_string(a);

    const auto& paras = article["paragraphs"];
    std::vector<QAExample> doc_examples;
    for (std::size_t p = 0; p < paras.size(); ++p) {
      const auto& para = paras[p];
      if (!para.is_object() || !para.contains("context") || !para["context"].is_string() ||
          !para.contains("qas") || !para["qas"].is_array())
        throw ParseError("malformed SQuAD record " + record_name(a, p, -1, para) +
                         ": expected \"context\" string and \"qas\" array");
      const std::size_t para_index = doc.paragraphs.size();
      doc.paragraphs.push_back(make_paragraph(doc.doc_id + "-p" + std::to_string(p),
                                              para["context"].get<std::string>()));
      const Paragraph& paragraph = doc.paragraphs.back();

      const auto& qas = para["qas"];
      for (std::size_t q = 0; q < qas.size(); ++q) {
        const auto& qa = qas[q];
        QAExample ex;
        bool impossible = false;
        try {
          ex.question = qa.at("question").get<std::string>();
          ex.qid = qa.contains("id") ? qa["id"].get<std::string>()
                                     : doc.doc_id + ":" + std::to_string(p) + ":" +
                                           std::to_string(q);
          impossible = qa.value("is_impossible", false);
          ex.doc_id = doc.doc_id;
          if (!impossible) {
            for (const auto& ans : qa.at("answers")) {
              const auto answer_text = ans.at("text").get<std::string>();
              const auto start = ans.at("answer_start").get<std::size_t>();
              const auto span = align_exact(paragraph, start, start + answer_text.size());
              if (!span || paragraph.raw_text.compare(start, answer_text.size(), answer_text) != 0) {
                ds.diagnostics.warn("unaligned_answer", record_name(a, p, q, qa));
                continue;
              }
              GoldAnswer g{para_index, span->first, span->second, answer_text};
              if (std::find(ex.gold_answers.begin(), ex.gold_answers.end(), g) ==
                  ex.gold_answers.end())
                ex.gold_answers.push_back(std::move(g));
            }
          }
        } catch (const json::exception& e) {
          throw ParseError("malformed SQuAD record " + record_name(a, p, q, qa) + ": " + e.what());
        }
        if (impossible) {
          if (version == SquadVersion::V1AnswerableOnly) continue;
          ex.is_answerable = false;
        } else {
          if (ex.gold_answers.empty()) {
            ds.diagnostics.warn("skipped_record", record_name(a, p, q, qa));
            continue;
          }
          ex.is_answerable = true;
        }
        doc_examples.push_back(std::move(ex));
      }
    }
    if (doc.paragraphs.empty()) {
      ds.diagnostics.warn("empty_document", "data[" + std::to_string(a) + "]");
      continue;
    }
    ds.documents.push_back(std::move(doc));
    for (auto& ex : doc_examples) ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset load_squad_format(const std::filesystem::path& path, SquadVersion version) {
  return parse_squad_json(read_file(path), version);
}

// ---------------------------------------------------------------------------
// NewsQA

namespace {

struct NewsStory {
  std::string id;
  std::string text;
  std::vector<text::Token> tokens;
  Document doc;
};

NewsStory make_story(std::string id, std::string text, std::size_t chunk_size) {
  NewsStory s;
  s.id = std::move(id);
  s.text = std::move(text);
  s.tokens = text::tokenize_words(s.text);
  s.doc = Document{s.id, std::nullopt,
                   chunk_document(s.text, s.tokens, chunk_size, s.id + "-p")};
  return s;
}

/// Assigns a document-level token span to the chunk containing its start,
/// clipping the end to that chunk.
GoldAnswer place_in_chunk(const NewsStory& story, std::size_t first, std::size_t last,
                          std::size_t chunk_size, Diagnostics& diag) {
  const std::size_t chunk = first / chunk_size;
  const std::size_t chunk_start = chunk * chunk_size;
  const Paragraph& p = story.doc.paragraphs[chunk];
  std::size_t local_last = last - chunk_start;
  if (local_last >= p.size()) {
    diag.warn("clipped_to_chunk", story.id);
    local_last = p.size() - 1;
  }
  const std::size_t local_first = first - chunk_start;
  return GoldAnswer{chunk, local_first, local_last, p.span_text(local_first, local_last)};
}

}  // namespace

Dataset parse_newsqa_json(std::string_view json_text, const NewsQAOptions& options) {
  if (options.chunk_size == 0) throw std::invalid_argument("chunk_size must be >= 1");
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed NewsQA JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("data") || !root["data"].is_array())
    throw ParseError("malformed NewsQA JSON: missing top-level \"data\" array");

  Dataset ds;
  const auto& data = root["data"];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& rec = data[i];
    const std::string where = "data[" + std::to_string(i) + "]";
    try {
      if (options.split && rec.value("type", std::string()) != *options.split) continue;
      auto story = make_story(rec.at("storyId").get<std::string>(),
                              rec.at("text").get<std::string>(), options.chunk_size);
      if (story.doc.paragraphs.empty()) {
        ds.diagnostics.warn("empty_document", where);
        continue;
      }
      const auto& questions = rec.at("questions");
      for (std::size_t q = 0; q < questions.size(); ++q) {
        const auto& item = questions[q];
        QAExample ex;
        ex.qid = story.id + ":" + std::to_string(q);
        ex.question = item.at("q").get<std::string>();
        ex.doc_id = story.id;
        const auto& cons = item.value("consensus", json::object());
        if (cons.value("badQuestion", false)) {
          ds.diagnostics.warn("bad_question", where + ".questions[" + std::to_string(q) + "]");
          continue;
        }
        if (cons.contains("s") && cons.contains("e")) {
          const auto b = cons["s"].get<std::size_t>();
          const auto e = std::min(cons["e"].get<std::size_t>(), story.text.size());
          const auto span = align_overlap(story.tokens, b, e);
          if (!span) {
            ds.diagnostics.warn("unaligned_answer",
                                where + ".questions[" + std::to_string(q) + "]");
            continue;
          }
          ex.gold_answers.push_back(place_in_chunk(story, span->first, span->second,
                                                   options.chunk_size, ds.diagnostics));
          ex.is_answerable = true;
        } else {
          if (options.answerable_only) continue;
          ex.is_answerable = false;
        }
        ds.examples.push_back(std::move(ex));
      }
      ds.documents.push_back(std::move(story.doc));
    } catch (const json::exception& e) {
      throw ParseError("malformed NewsQA record " + where + ": " + e.what());
    }
  }
  return ds;
}

Dataset load_newsqa_json(const std::filesystem::path& path, const NewsQAOptions& options) {
  return parse_newsqa_json(read_file(path), options);
}

namespace {

std::vector<std::vector<std::string>> parse_csv(std::string_view s) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw ParseError("malformed CSV: unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Dataset parse_newsqa_csv(std::string_view csv_text, const NewsQAOptions& options) {
  if (options.chunk_size == 0) throw std::invalid_argument("chunk_size must be >= 1");
  const auto rows = parse_csv(csv_text);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError("malformed NewsQA CSV: missing column " + std::string(name));
  };
  const auto c_id = column("story_id");
  const auto c_text = column("story_text");
  const auto c_q = column("question");
  const auto c_ranges = column("answer_token_ranges");

  Dataset ds;
  std::unordered_map<std::string, NewsStory> stories;
  std::vector<std::string> order;
  std::size_t qn = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() < header.size())
      throw ParseError("malformed NewsQA CSV record at row " + std::to_string(r));
    const auto& id = row[c_id];
    auto it = stories.find(id);
    if (it == stories.end()) {
      it = stories.emplace(id, make_story(id, row[c_text], options.chunk_size)).first;
      order.push_back(id);
    }
    const NewsStory& story = it->second;
    if (story.doc.paragraphs.empty()) continue;

    QAExample ex;
    ex.qid = id + ":" + std::to_string(qn++);
    ex.question = row[c_q];
    ex.doc_id = id;
    const std::string ranges = text::trim(row[c_ranges]);
    if (ranges.empty() || ranges == "None") {
      if (options.answerable_only) continue;
      ex.is_answerable = false;
      ds.examples.push_back(std::move(ex));
      continue;
    }
    // Ranges index whitespace-delimited words of the story, end exclusive.
    std::vector<std::pair<std::size_t, std::size_t>> word_spans;
    for (std::size_t i = 0; i < story.text.size();) {
      while (i < story.text.size() && std::isspace(static_cast<unsigned char>(story.text[i]))) ++i;
      const std::size_t b = i;
      while (i < story.text.size() && !std::isspace(static_cast<unsigned char>(story.text[i]))) ++i;
      if (i > b) word_spans.emplace_back(b, i);
    }
    const std::string first_range = ranges.substr(0, ranges.find(','));
    const auto colon = first_range.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("range");
      const auto a = std::stoul(first_range.substr(0, colon));
      const auto b = std::stoul(first_range.substr(colon + 1));
      if (a >= b || b > word_spans.size()) throw std::out_of_range("range");
      const auto span =
          align_overlap(story.tokens, word_spans[a].first, word_spans[b - 1].second);
      if (!span) throw std::out_of_range("range");
      ex.gold_answers.push_back(
          place_in_chunk(story, span->first, span->second, options.chunk_size, ds.diagnostics));
      ex.is_answerable = true;
      ds.examples.push_back(std::move(ex));
    } catch (const std::logic_error&) {
      ds.diagnostics.warn("unaligned_answer", "row " + std::to_string(r));
    }
  }
  for (const auto& id : order) ds.documents.push_back(stories.at(id).doc);
  return ds;
}

Dataset load_newsqa_csv(const std::filesystem::path& path, const NewsQAOptions& options) {
  return parse_newsqa_csv(read_file(path), options);
}

Dataset concat(std::vector<Dataset> parts) {
  Dataset out;
  std::unordered_set<std::string> ids;
  for (auto& part : parts) {
    std::unordered_map<std::string, std::string> renamed;
    for (auto& doc : part.documents) {
      std::string id = doc.doc_id;
      for (int n = 1; ids.count(id); ++n) id = doc.doc_id + "#" + std::to_string(n);
      ids.insert(id);
      renamed[doc.doc_id] = id;
      doc.doc_id = id;
      out.documents.push_back(std::move(doc));
    }
    for (auto& ex : part.examples) {
      ex.doc_id = renamed.count(ex.doc_id) ? renamed[ex.doc_id] : ex.doc_id;
      out.examples.push_back(std::move(ex));
    }
    out.diagnostics.merge(part.diagnostics);
  }
  return out;
}

std::pair<Dataset, Dataset> split_validation(const Dataset& train, double val_fraction,
                                             unsigned seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("val_fraction must be in [0, 1)");
  std::vector<std::size_t> idx(train.examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(idx.size()));
  std::vector<bool> is_val(idx.size(), false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[idx[i]] = true;

  Dataset tr, va;
  tr.documents = train.documents;
  va.documents = train.documents;
  for (std::size_t i = 0; i < train.examples.size(); ++i)
    (is_val[i] ? va : tr).examples.push_back(train.examples[i]);
  tr.diagnostics = train.diagnostics;
  return {std::move(tr), std::move(va)};
}

// ---------------------------------------------------------------------------
// QG derivation

QGDerivation derive_qg_examples(const std::vector<Document>& documents,
                                const std::vector<QAExample>& examples,
                                syntax::SyntaxProvider& provider) {
  QGDerivation out;
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : documents) by_id.emplace(d.doc_id, &d);
  std::unordered_map<const Paragraph*, std::vector<syntax::Sentence>> sentence_cache;

  for (const auto& ex : examples) {
    if (!ex.is_answerable || ex.gold_answers.empty()) {
      out.diagnostics.warn("unanswerable_excluded", ex.qid);
      continue;
    }
    auto it = by_id.find(ex.doc_id);
    if (it == by_id.end()) {
      out.diagnostics.warn("missing_document", ex.qid);
      continue;
    }
    const auto& gold = ex.gold_answers.front();
    const Paragraph& para = it->second->paragraphs.at(gold.paragraph);
    auto& sentences = sentence_cache[&para];
    if (sentences.empty()) sentences = provider.segment(para.raw_text);

    const std::size_t b = para.char_offsets.at(gold.start).begin;
    const std::size_t e = para.char_offsets.at(gold.end).end;
    std::size_t s_idx = sentences.size();
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      const auto& s = sentences[i];
      if (b < s.offset + s.text.size()) {
        s_idx = i;
        break;
      }
    }
    if (s_idx == sentences.size()) {
      out.diagnostics.warn("span_outside_sentences", ex.qid);
      continue;
    }
    const auto& sent = sentences[s_idx];
    const std::size_t local_b = b < sent.offset ? 0 : b - sent.offset;
    std::size_t local_e = e - sent.offset;
    if (e > sent.offset + sent.text.size()) {
      out.diagnostics.warn("span_crosses_sentence", ex.qid);
      local_e = sent.text.size();
    }
    bool expanded = false;
    QGExample qg{make_qg_input(sent.text, {local_b, local_e}, static_cast<int>(s_idx), &expanded),
                 ex.question};
    if (expanded) out.diagnostics.warn("span_expanded", ex.qid);
    if (text::trim(qg.question).empty()) {
      out.diagnostics.warn("empty_target", ex.qid);
      continue;
    }
    out.examples.push_back(std::move(qg));
    out.paragraphs.push_back(para.raw_text);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation records

std::vector<QGExample> parse_augmentation(std::string_view jsonl, Diagnostics* diagnostics) {
  Diagnostics local;
  Diagnostics& diag = diagnostics ? *diagnostics : local;
  std::vector<QGExample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const auto line = text::trim(jsonl.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("malformed augmentation record at line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    std::string sentence, question, answer;
    std::int64_t start = -1;
    try {
      sentence = rec.at("sentence").get<std::string>();
      question = rec.at("question").get<std::string>();
      answer = rec.at("answer_text").get<std::string>();
      start = rec.value("answer_char_start", std::int64_t{-1});
    } catch (const json::exception& e) {
      throw ParseError("malformed augmentation record at line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    std::size_t found = std::string::npos;
    if (!answer.empty()) {
      if (start >= 0 && static_cast<std::size_t>(start) <= sentence.size() &&
          sentence.compare(static_cast<std::size_t>(start), answer.size(), answer) == 0)
        found = static_cast<std::size_t>(start);
      else
        found = sentence.find(answer);
    }
    if (found == std::string::npos) {
      diag.warn("answer_not_in_sentence", "line " + std::to_string(line_no));
      continue;
    }
    try {
      out.push_back({make_qg_input(sentence, {found, found + answer.size()}, 0), question});
    } catch (const std::invalid_argument&) {
      diag.warn("answer_not_in_sentence", "line " + std::to_string(line_no));
    }
  }
  return out;
}

std::vector<QGExample> load_augmentation(const std::filesystem::path& path,
                                         Diagnostics* diagnostics) {
  return parse_augmentation(read_file(path), diagnostics);
}

// ---------------------------------------------------------------------------
// Caches

namespace {

json to_json(const QGInput& in) {
  json j{{"sentence_tokens", in.sentence_tokens},
         {"source_sentence_index", in.source_sentence_index},
         {"sentence", in.sentence}};
  if (in.answer_char_span)
    j["answer_char_span"] = {in.answer_char_span->begin, in.answer_char_span->end};
  return j;
}

QGInput qg_input_from_json(const json& j) {
  QGInput in;
  in.sentence_tokens = j.at("sentence_tokens").get<std::vector<std::string>>();
  in.source_sentence_index = j.value("source_sentence_index", 0);
  in.sentence = j.value("sentence", std::string());
  if (j.contains("answer_char_span") && j["answer_char_span"].is_array())
    in.answer_char_span = CharSpan{j["answer_char_span"][0].get<std::size_t>(),
                                   j["answer_char_span"][1].get<std::size_t>()};
  return in;
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

std::vector<json> read_lines(const std::filesystem::path& path) {
  std::vector<json> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void save_qg_cache(const std::filesystem::path& path, const std::vector<QGExample>& examples) {
  std::vector<json> lines;
  for (const auto& ex : examples) lines.push_back({{"input", to_json(ex.input)}, {"question", ex.question}});
  write_lines(path, lines);
}

std::vector<QGExample> load_qg_cache(const std::filesystem::path& path) {
  std::vector<QGExample> out;
  for (const auto& j : read_lines(path)) {
    try {
      out.push_back({qg_input_from_json(j.at("input")), j.at("question").get<std::string>()});
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": malformed QG record: " + e.what());
    }
  }
  return out;
}

void save_qa_cache(const std::filesystem::path& path, const Dataset& dataset) {
  std::vector<json> lines;
  for (const auto& d : dataset.documents) {
    json paras = json::array();
    for (const auto& p : d.paragraphs) paras.push_back({{"para_id", p.para_id}, {"text", p.raw_text}});
    json j{{"kind", "document"}, {"doc_id", d.doc_id}, {"paragraphs", paras}};
    if (d.title) j["title"] = *d.title;
    lines.push_back(std::move(j));
  }
  for (const auto& ex : dataset.examples) {
    json golds = json::array();
    for (const auto& g : ex.gold_answers)
      golds.push_back({{"paragraph", g.paragraph}, {"start", g.start}, {"end", g.end}, {"text", g.text}});
    lines.push_back({{"kind", "example"},
                     {"qid", ex.qid},
                     {"question", ex.question},
                     {"doc_id", ex.doc_id},
                     {"is_answerable", ex.is_answerable},
                     {"gold_answers", golds}});
  }
  write_lines(path, lines);
}

Dataset load_qa_cache(const std::filesystem::path& path) {
  Dataset ds;
  for (const auto& j : read_lines(path)) {
    try {
      if (j.at("kind") == "document") {
        Document d;
        d.doc_id = j.at("doc_id").get<std::string>();
        if (j.contains("title")) d.title = j["title"].get<std::string>();
        for (const auto& p : j.at("paragraphs"))
          d.paragraphs.push_back(
              make_paragraph(p.at("para_id").get<std::string>(), p.at("text").get<std::string>()));
        ds.documents.push_back(std::move(d));
      } else {
        QAExample ex;
        ex.qid = j.at("qid").get<std::string>();
        ex.question = j.at("question").get<std::string>();
        ex.doc_id = j.at("doc_id").get<std::string>();
        ex.is_answerable = j.at("is_answerable").get<bool>();
        for (const auto& g : j.at("gold_answers"))
          ex.gold_answers.push_back({g.at("paragraph").get<std::size_t>(), g.at("start").get<std::size_t>(),
                                     g.at("end").get<std::size_t>(), g.at("text").get<std::string>()});
        ds.examples.push_back(std::move(ex));
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": malformed QA cache record: " + e.what());
    }
  }
  return ds;
}

}  // namespace qna::corpus
