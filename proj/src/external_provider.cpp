#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "qna/candidates.hpp"

namespace qna::candidates {

using nlohmann::json;

json analysis_to_json(const syntax::Analysis& a) {
  json tokens = json::array(), ents = json::array(), chunks = json::array(), arcs = json::array();
  for (const auto& t : a.tokens) tokens.push_back({t.begin, t.end});
  for (const auto& e : a.entities) ents.push_back({{"first", e.first}, {"last", e.last}, {"type", syntax::entity_type_name(e.type)}});
  for (const auto& c : a.noun_chunks) chunks.push_back({c.first, c.last});
  for (const auto& r : a.arcs) arcs.push_back({r.head, r.label});
  return {{"tokens", tokens}, {"pos", a.pos}, {"entities", ents}, {"noun_chunks", chunks}, {"arcs", arcs}};
}

std::optional<syntax::EntityType> parse_entity_type(std::string_view name) {
  using T = syntax::EntityType;
  for (T t : {T::Person, T::Place, T::Date, T::Number, T::Organization, T::Other})
    if (syntax::entity_type_name(t) == name) return t;
  return std::nullopt;
}

syntax::Analysis analysis_from_json(const json& j) {
  // The sentence text is not on the wire; callers fill it and token text.
  syntax::Analysis a;
  for (const auto& t : j.at("tokens")) a.tokens.push_back({"", t.at(0).get<std::size_t>(), t.at(1).get<std::size_t>()});
  a.pos = j.value("pos", std::vector<std::string>(a.tokens.size(), "X"));
  for (const auto& e : j.at("entities")) {
    const auto type = parse_entity_type(e.value("type", "other"));
    a.entities.push_back({e.at("first").get<std::size_t>(), e.at("last").get<std::size_t>(),
                          type.value_or(syntax::EntityType::Other)});
  }
  for (const auto& c : j.at("noun_chunks")) a.noun_chunks.push_back({c.at(0).get<std::size_t>(), c.at(1).get<std::size_t>()});
  for (const auto& r : j.at("arcs")) a.arcs.push_back({r.at(0).get<int>(), r.at(1).get<std::string>()});
  const std::size_t n = a.tokens.size();
  if (a.pos.size() != n || a.arcs.size() != n) throw ParseError("analysis arrays disagree in length");
  for (const auto& e : a.entities)
    if (e.first > e.last || e.last >= n) throw ParseError("entity outside token range");
  for (const auto& c : a.noun_chunks)
    if (c.first > c.last || c.last >= n) throw ParseError("noun chunk outside token range");
  for (const auto& r : a.arcs)
    if (r.head < -1 || r.head >= static_cast<int>(n)) throw ParseError("arc head outside token range");
  return a;
}

void serve_provider(syntax::SyntaxProvider& provider, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json resp;
    try {
      const auto req = json::parse(line);
      const auto op = req.at("op").get<std::string>();
      if (op == "version") {
        resp = {{"version", provider.version()}};
      } else if (op == "segment") {
        json sents = json::array();
        for (const auto& s : provider.segment(req.at("text").get<std::string>())) sents.push_back({s.offset, s.text.size()});
        resp = {{"sentences", sents}};
      } else if (op == "analyze") {
        resp = analysis_to_json(provider.analyze(req.at("sentence").get<std::string>()));
      } else {
        resp = {{"error", "unknown op " + op}};
      }
    } catch (const std::exception& e) {
      resp = {{"error", e.what()}};
    }
    out << resp.dump(-1, ' ', false, json::error_handler_t::replace) << '\n' << std::flush;
  }
}

struct ExternalProvider::Process {
  pid_t pid = -1;
  FILE* to_child = nullptr;
  FILE* from_child = nullptr;

  ~Process() {
    if (to_child) std::fclose(to_child);
    if (from_child) std::fclose(from_child);
    if (pid > 0) {
      int status = 0;
      if (waitpid(pid, &status, WNOHANG) == 0) {
        kill(pid, SIGTERM);
        waitpid(pid, &status, 0);
      }
    }
  }
};

ExternalProvider::ExternalProvider(std::vector<std::string> command) : command_(std::move(command)) {
  if (command_.empty()) throw ConfigError("external syntax provider needs a command");
  std::vector<char*> argv;
  for (auto& a : command_) argv.push_back(a.data());
  argv.push_back(nullptr);
  int in_pipe[2], out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0) throw std::runtime_error("pipe failed");
  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    dup2(in_pipe[0], 0);
    dup2(out_pipe[1], 1);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  proc_ = std::make_unique<Process>();
  proc_->pid = pid;
  proc_->to_child = fdopen(in_pipe[1], "w");
  proc_->from_child = fdopen(out_pipe[0], "r");
  // A dead child must surface as an error, not kill us.
  signal(SIGPIPE, SIG_IGN);
  version_ = request({{"op", "version"}}).at("version").get<std::string>();
}

ExternalProvider::~ExternalProvider() = default;

std::string ExternalProvider::version() const { return version_; }

json ExternalProvider::request(const json& req) {
  const auto line = req.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), proc_->to_child) != line.size() || std::fflush(proc_->to_child) != 0)
    throw std::runtime_error("syntax provider process is not accepting input");
  std::string resp;
  int c;
  while ((c = std::fgetc(proc_->from_child)) != EOF && c != '\n') resp += static_cast<char>(c);
  if (resp.empty()) throw std::runtime_error("syntax provider process closed its output");
  json j;
  try {
    j = json::parse(resp);
  } catch (const json::exception& e) {
    throw ParseError(std::string("syntax provider sent invalid JSON: ") + e.what());
  }
  if (j.contains("error")) throw std::runtime_error("syntax provider error: " + j["error"].dump());
  return j;
}

std::vector<syntax::Sentence> ExternalProvider::segment(std::string_view text) {
  const auto j = request({{"op", "segment"}, {"text", text}});
  std::vector<syntax::Sentence> out;
  for (const auto& s : j.at("sentences")) {
    const auto off = s.at(0).get<std::size_t>(), len = s.at(1).get<std::size_t>();
    if (off + len > text.size()) throw ParseError("sentence outside text");
    out.push_back({std::string(text.substr(off, len)), off});
  }
  return out;
}

syntax::Analysis ExternalProvider::analyze(std::string_view sentence) {
  auto a = analysis_from_json(request({{"op", "analyze"}, {"sentence", sentence}}));
  a.sentence = std::string(sentence);
  for (auto& t : a.tokens) {
    if (t.begin >= t.end || t.end > sentence.size()) throw ParseError("token outside sentence");
    t.text = std::string(sentence.substr(t.begin, t.end - t.begin));
  }
  // The external parser reports "dobj"; candidates match on "obj".
  for (auto& arc : a.arcs)
    if (arc.label == "dobj") arc.label = "obj";
  return a;
}

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ProviderFactory>& registry() {
  static std::map<std::string, ProviderFactory> r{
      {"desk", [] { return std::make_unique<DeskProvider>(); }},
      {"production",
       [] {
         const char* env = std::getenv("QNA_SYNTAX_CMD");
         std::istringstream ss(env && *env ? env : "python3 tools/spacy_syntax.py");
         std::vector<std::string> cmd;
         for (std::string part; ss >> part;) cmd.push_back(part);
         return std::make_unique<ExternalProvider>(std::move(cmd));
       }},
  };
  return r;
}

}  // namespace

void register_provider(const std::string& name, ProviderFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::unique_ptr<syntax::SyntaxProvider> make_provider(const std::string& name) {
  ProviderFactory f;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end()) throw ConfigError("unknown syntax provider: " + name);
    f = it->second;
  }
  return f();
}

std::vector<std::string> provider_names() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

}  // namespace qna::candidates
