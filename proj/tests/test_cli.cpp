#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "support/process.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kData = QNA_TEST_DATA;

struct Workdir {
  fs::path dir;
  Workdir(const Workdir&) = delete;
  Workdir() : dir(fs::temp_directory_path() / ("qna_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

proc::Result qna(std::vector<std::string> args) {
  args.insert(args.begin(), QNA_CLI);
  return proc::run(args);
}

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

const Workdir& stubs() {
  static const Workdir w;
  static const bool made = [] {
    for (const auto& [kind, seed] : {std::pair{"qa", "11"}, std::pair{"qg", "12"}})
      if (qna({"make-stub", "--kind", kind, "--text", kData + "/catalog_fixture.txt", "--seed", seed, "--out",
               w / (std::string(kind) + ".ckpt")})
              .status != 0)
        return false;
    return true;
  }();
  REQUIRE(made);
  return w;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(qna({"--help"}).status == 0);
  CHECK(qna({"catalog"}).status != 0);
  CHECK(qna({"no-such-command"}).status != 0);
}

TEST_CASE("catalog is deterministic and well formed") {
  const auto& w = stubs();
  const std::vector<std::string> args{"catalog", "--text", kData + "/catalog_fixture.txt", "--qg-ckpt", w / "qg.ckpt",
                                      "--qa-ckpt", w / "qa.ckpt", "--beam", "2"};
  const auto a = qna(args), b = qna(args);
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);
  const auto items = json::parse(a.out);
  CHECK(items.is_array());
  for (const auto& it : items) {
    CHECK(it.contains("question"));
    CHECK(it.contains("answer"));
  }
  auto out_args = args;
  out_args.insert(out_args.end(), {"--out", w / "cat.json"});
  REQUIRE(qna(out_args).status == 0);
  CHECK(slurp(w / "cat.json") == a.out);
}

TEST_CASE("answer prints a json verdict") {
  const auto& w = stubs();
  const auto r = qna({"answer", "--text", kData + "/catalog_fixture.txt", "--question", "Who designed the locks?",
                      "--qa-ckpt", w / "qa.ckpt"});
  REQUIRE(r.status == 0);
  const auto j = json::parse(r.out);
  CHECK(j["answerable"].is_boolean());
  CHECK(j["answer"].is_string() == j["answerable"].get<bool>());
  CHECK(j["score"].get<double>() <= 0.0);
}

TEST_CASE("generate emits one line per input") {
  const auto& w = stubs();
  write(w / "in.jsonl",
        R"({"sentence": "Elsa Marrow designed eleven locks .", "answer_text": "eleven"})"
        "\n"
        R"({"sentence": "Barges were pulled by horses ."})"
        "\n");
  const auto r = qna({"generate", "--checkpoint", w / "qg.ckpt", "--input", w / "in.jsonl", "--beam", "2",
                      "--max-len", "8"});
  REQUIRE(r.status == 0);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = json::parse(line);
    CHECK(j["input_index"] == n);
    CHECK(j["log_prob"].get<double>() <= 0.0);
    ++n;
  }
  CHECK(n == 2);
}

TEST_CASE("rule-generate writes augmentation records") {
  const auto& w = stubs();
  write(w / "rules.jsonl", R"({"sentence": "The locks were finished in 1791 .", "answer_text": "1791"})" "\n");
  const auto r = qna({"rule-generate", "--input", w / "rules.jsonl"});
  REQUIRE(r.status == 0);
  const auto j = json::parse(r.out.substr(0, r.out.find('\n')));
  CHECK(j["answer_text"] == "1791");
  CHECK(j["answer_char_start"] == 27);
  CHECK(j["question"] == "When were the locks finished?");
}

TEST_CASE("eval-qa reports exact match and f1") {
  const auto& w = stubs();
  const auto r = qna({"eval-qa", "--checkpoint", w / "qa.ckpt", "--test", kData + "/qa_overfit.json"});
  REQUIRE(r.status == 0);
  const auto j = json::parse(r.out);
  CHECK(j.contains("exact"));
  CHECK(j.contains("f1"));
  CHECK(j["f1"].get<double>() >= j["exact"].get<double>());
}

TEST_CASE("configuration errors exit with status 2") {
  const auto& w = stubs();
  write(w / "aug.jsonl", R"({"sentence": "The mill stood by the river .", "answer_text": "the river", "question": "Where did the mill stand ?"})" "\n");
  CHECK(qna({"train-qg", "--regime", "augmented", "--train", w / "aug.jsonl", "--max-steps", "1", "--out",
             w / "x.ckpt"})
            .status == 2);
  CHECK(qna({"train-qa", "--train", kData + "/qa_overfit.json", "--epochs", "0", "--out", w / "y.ckpt"}).status == 2);
  CHECK_FALSE(fs::exists(w / "x.ckpt"));
}

TEST_CASE("bad input files exit with status 1") {
  const auto& w = stubs();
  write(w / "broken.jsonl", "{not json\n");
  CHECK(qna({"generate", "--checkpoint", w / "qg.ckpt", "--input", w / "broken.jsonl"}).status == 1);
  write(w / "garbage.ckpt", "garbage");
  CHECK(qna({"answer", "--text", kData + "/catalog_fixture.txt", "--question", "Who?", "--qa-ckpt",
             w / "garbage.ckpt"})
            .status == 1);
}

TEST_CASE("syntax-server speaks line-delimited json") {
  const auto& w = stubs();
  write(w / "req.jsonl", "{\"op\":\"version\"}\n{\"op\":\"analyze\",\"sentence\":\"Barges moved coal .\"}\n");
  const auto r = proc::run({"sh", "-c", proc::quote(QNA_CLI) + " syntax-server < " + proc::quote(w / "req.jsonl")});
  REQUIRE(r.status == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::vector<json> replies;
  while (std::getline(lines, line)) replies.push_back(json::parse(line));
  REQUIRE(replies.size() == 2);
  CHECK(replies[1]["tokens"].size() == 4);
}
