#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "qna/candidates.hpp"
#include "qna/corpus.hpp"
#include "qna/metrics.hpp"
#include "qna/pipeline.hpp"
#include "qna/qa_engine.hpp"
#include "qna/qg_engine.hpp"
#include "qna/service.hpp"

using namespace qna;
using nlohmann::json;

namespace {

struct Common {
  std::size_t top_k = 4;
  double bm25_k1 = 1.5;
  double bm25_b = 0.75;
  std::string syntax_provider = "desk";
  double val_fraction = 0.0;
  unsigned seed = 13;
};

retrieval::RetrievalConfig retrieval_config(const Common& c, std::size_t k) {
  retrieval::RetrievalConfig r;
  r.k = k;
  r.k1 = c.bm25_k1;
  r.b = c.bm25_b;
  r.validate();
  return r;
}

void report(const Diagnostics& d) {
  for (const auto& [kind, n] : d.counts) std::cerr << "warning: " << kind << " x" << n << "\n";
}

void write_text(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

corpus::Dataset load_qa_data(const std::string& path, const std::string& format, std::size_t chunk) {
  if (format == "squad2") return corpus::load_squad_format(path, corpus::SquadVersion::V2WithUnanswerable);
  if (format == "squad1") return corpus::load_squad_format(path, corpus::SquadVersion::V1AnswerableOnly);
  corpus::NewsQAOptions o;
  o.chunk_size = chunk;
  if (format == "newsqa-json") return corpus::load_newsqa_json(path, o);
  if (format == "newsqa-csv") return corpus::load_newsqa_csv(path, o);
  throw ConfigError("unknown data format: " + format);
}

std::vector<corpus::QGExample> load_qg_data(const std::string& path, syntax::SyntaxProvider& provider,
                                            Diagnostics& diag) {
  if (path.ends_with(".jsonl")) return corpus::load_augmentation(path, &diag);
  const auto data = corpus::load_squad_format(path, corpus::SquadVersion::V1AnswerableOnly);
  auto derived = corpus::derive_qg_examples(data.documents, data.examples, provider);
  diag.merge(derived.diagnostics);
  return derived.examples;
}

/// JSONL records {sentence, answer_text?, answer_char_start?, sentence_index?, paragraph?}.
struct SentenceRecord {
  corpus::QGInput input;
  std::string paragraph;
};

std::vector<SentenceRecord> load_sentences(const std::string& path) {
  std::vector<SentenceRecord> out;
  std::istringstream in(corpus::read_file(path));
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(no) + ": " + e.what());
    }
    const auto sentence = j.at("sentence").get<std::string>();
    const int index = j.value("sentence_index", 0);
    const auto answer = j.value("answer_text", std::string());
    SentenceRecord r;
    r.paragraph = j.value("paragraph", sentence);
    if (answer.empty()) {
      r.input = corpus::make_unmarked_input(sentence, index);
    } else {
      std::size_t begin = std::string::npos;
      const auto start = j.value("answer_char_start", std::int64_t{-1});
      if (start >= 0 && static_cast<std::size_t>(start) <= sentence.size() &&
          sentence.compare(static_cast<std::size_t>(start), answer.size(), answer) == 0)
        begin = static_cast<std::size_t>(start);
      else
        begin = sentence.find(answer);
      if (begin == std::string::npos) throw ParseError("line " + std::to_string(no) + ": answer not in sentence");
      r.input = corpus::make_qg_input(sentence, {begin, begin + answer.size()}, index);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Question generation and answering over documents"};
  app.fallthrough();
  app.require_subcommand(1);
  Common common;
  app.add_option("--top-k", common.top_k, "Paragraphs retrieved per question")->capture_default_str();
  app.add_option("--bm25-k1", common.bm25_k1, "BM25 term saturation")->capture_default_str();
  app.add_option("--bm25-b", common.bm25_b, "BM25 length normalization")->capture_default_str();
  app.add_option("--syntax-provider", common.syntax_provider, "Syntax provider")
      ->check(CLI::IsMember({"desk", "production"}))
      ->capture_default_str();
  app.add_option("--val-fraction", common.val_fraction, "Validation split carved from --train when --val is absent")
      ->check(CLI::Range(0.0, 0.9))
      ->capture_default_str();
  app.add_option("--seed", common.seed, "Random seed")->capture_default_str();

  // train-qa
  auto* tqa = app.add_subcommand("train-qa", "Train the extractive QA model");
  std::string tqa_train, tqa_val, tqa_out = "qa.ckpt", tqa_format = "squad2", tqa_preset = "desk", tqa_init;
  int tqa_epochs = 3;
  double tqa_lr = 3e-5;
  std::size_t tqa_k = 4, tqa_batch = 32, tqa_merges = 2000, tqa_chunk = 300;
  std::optional<float> tqa_dropout;
  int tqa_patience = 0;
  tqa->add_option("--train", tqa_train, "Training data")->required()->check(CLI::ExistingFile);
  tqa->add_option("--val", tqa_val, "Validation data")->check(CLI::ExistingFile);
  tqa->add_option("--format", tqa_format, "squad2|squad1|newsqa-json|newsqa-csv")->capture_default_str();
  tqa->add_option("--chunk-size", tqa_chunk, "NewsQA paragraph size in tokens")->capture_default_str();
  tqa->add_option("--k", tqa_k, "Paragraphs per question in training")->capture_default_str();
  tqa->add_option("--epochs", tqa_epochs)->capture_default_str();
  tqa->add_option("--lr", tqa_lr)->capture_default_str();
  tqa->add_option("--batch-size", tqa_batch)->capture_default_str();
  tqa->add_option("--preset", tqa_preset)->check(CLI::IsMember({"desk", "base"}))->capture_default_str();
  tqa->add_option("--bpe-merges", tqa_merges)->capture_default_str();
  tqa->add_option("--dropout", tqa_dropout);
  tqa->add_option("--patience", tqa_patience, "Early-stopping patience in epochs, 0 = off")->capture_default_str();
  tqa->add_option("--init", tqa_init, "Continue from a checkpoint")->check(CLI::ExistingFile);
  tqa->add_option("--out", tqa_out)->capture_default_str();

  // eval-qa
  auto* eqa = app.add_subcommand("eval-qa", "Evaluate a QA checkpoint (EM/F1)");
  std::string eqa_ckpt, eqa_test, eqa_format = "squad2", eqa_preds, eqa_report;
  std::size_t eqa_k = 4, eqa_chunk = 300;
  bool eqa_examples = false;
  eqa->add_option("--checkpoint", eqa_ckpt)->required()->check(CLI::ExistingFile);
  eqa->add_option("--test", eqa_test)->required()->check(CLI::ExistingFile);
  eqa->add_option("--format", eqa_format)->capture_default_str();
  eqa->add_option("--chunk-size", eqa_chunk)->capture_default_str();
  eqa->add_option("--k", eqa_k)->capture_default_str();
  eqa->add_option("--predictions", eqa_preds, "Write {id: answer} predictions here");
  eqa->add_option("--report", eqa_report, "Write the EvalReport JSON here (default stdout)");
  eqa->add_flag("--per-example", eqa_examples);

  // train-qg
  auto* tqg = app.add_subcommand("train-qg", "Train the question generator");
  std::string tqg_regime = "standard", tqg_train, tqg_val, tqg_init, tqg_out = "qg.ckpt", tqg_preset = "desk";
  std::optional<std::int64_t> tqg_steps, tqg_every;
  std::optional<std::size_t> tqg_batch;
  std::optional<double> tqg_lr;
  std::optional<float> tqg_dropout;
  tqg->add_option("--regime", tqg_regime)->check(CLI::IsMember({"standard", "rulemimic", "augmented"}))->capture_default_str();
  tqg->add_option("--train", tqg_train, ".jsonl augmentation records or SQuAD JSON")->required()->check(CLI::ExistingFile);
  tqg->add_option("--val", tqg_val)->check(CLI::ExistingFile);
  tqg->add_option("--init", tqg_init, "Parent checkpoint (required for augmented)")->check(CLI::ExistingFile);
  tqg->add_option("--preset", tqg_preset)->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
  tqg->add_option("--max-steps", tqg_steps);
  tqg->add_option("--validate-every", tqg_every);
  tqg->add_option("--batch-tokens", tqg_batch);
  tqg->add_option("--lr", tqg_lr);
  tqg->add_option("--dropout", tqg_dropout);
  tqg->add_option("--out", tqg_out)->capture_default_str();

  // rule-generate
  auto* rg = app.add_subcommand("rule-generate", "Toy rule-based questions for marked sentences (RuleMimic data)");
  std::string rg_in, rg_out;
  rg->add_option("--input", rg_in, "Sentence JSONL")->required()->check(CLI::ExistingFile);
  rg->add_option("--out", rg_out, "Augmentation JSONL (default stdout)");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate questions for sentences");
  std::string gen_ckpt, gen_in, gen_out;
  std::size_t gen_beam = 5, gen_max_len = 40;
  double gen_alpha = 0.0;
  gen->add_option("--checkpoint", gen_ckpt)->required()->check(CLI::ExistingFile);
  gen->add_option("--input", gen_in, "Sentence JSONL")->required()->check(CLI::ExistingFile);
  gen->add_option("--beam", gen_beam)->capture_default_str();
  gen->add_option("--max-len", gen_max_len)->capture_default_str();
  gen->add_option("--length-penalty", gen_alpha)->capture_default_str();
  gen->add_option("--out", gen_out);

  // catalog
  auto* cat = app.add_subcommand("catalog", "Build a Q&A catalog for a text");
  std::string cat_text, cat_qg, cat_qa, cat_out, cat_measure = "coefficient";
  double cat_overlap = 0.6;
  std::size_t cat_beam = 5, cat_cap = 12;
  bool cat_no_guard = false;
  cat->add_option("--text", cat_text)->required()->check(CLI::ExistingFile);
  cat->add_option("--qg-ckpt", cat_qg)->required()->check(CLI::ExistingFile);
  cat->add_option("--qa-ckpt", cat_qa)->required()->check(CLI::ExistingFile);
  cat->add_option("--overlap", cat_overlap)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cat->add_option("--overlap-measure", cat_measure)->check(CLI::IsMember({"coefficient", "jaccard"}))->capture_default_str();
  cat->add_flag("--no-self-guard", cat_no_guard, "Keep items whose question overlaps their own answer");
  cat->add_option("--beam", cat_beam)->capture_default_str();
  cat->add_option("--max-candidates", cat_cap)->capture_default_str();
  cat->add_option("--out", cat_out);

  // answer
  auto* ans = app.add_subcommand("answer", "Answer one question over a text");
  std::string ans_text, ans_q, ans_qa;
  std::size_t ans_chunk = 300;
  ans->add_option("--text", ans_text)->required()->check(CLI::ExistingFile);
  ans->add_option("--question", ans_q)->required();
  ans->add_option("--qa-ckpt", ans_qa)->required()->check(CLI::ExistingFile);
  ans->add_option("--chunk-size", ans_chunk)->capture_default_str();

  // qa-on-qg
  auto* qoq = app.add_subcommand("qa-on-qg", "Score generated questions by QA answerability (mean F1)");
  std::string qoq_qg, qoq_qa, qoq_in;
  std::size_t qoq_beam = 5;
  qoq->add_option("--qg-ckpt", qoq_qg)->required()->check(CLI::ExistingFile);
  qoq->add_option("--qa-ckpt", qoq_qa)->required()->check(CLI::ExistingFile);
  qoq->add_option("--input", qoq_in, "Sentence JSONL with answer_text and paragraph")->required()->check(CLI::ExistingFile);
  qoq->add_option("--beam", qoq_beam)->capture_default_str();

  // serve
  auto* srv = app.add_subcommand("serve", "Run the HTTP service");
  std::string srv_config, srv_host;
  std::optional<int> srv_port;
  srv->add_option("--config", srv_config)->check(CLI::ExistingFile);
  srv->add_option("--host", srv_host);
  srv->add_option("--port", srv_port);

  // make-stub
  auto* stub = app.add_subcommand("make-stub", "Write a randomly initialised desk-preset checkpoint");
  std::string stub_kind, stub_text, stub_out;
  std::uint32_t stub_seed = 1;
  std::size_t stub_merges = 300;
  stub->add_option("--kind", stub_kind)->required()->check(CLI::IsMember({"qa", "qg"}));
  stub->add_option("--text", stub_text, "Text the tokenizer is fit on")->required()->check(CLI::ExistingFile);
  stub->add_option("--seed", stub_seed)->capture_default_str();
  stub->add_option("--bpe-merges", stub_merges)->capture_default_str();
  stub->add_option("--out", stub_out)->required();

  // syntax-server
  auto* ss = app.add_subcommand("syntax-server", "Serve the external syntax protocol on stdin/stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*tqa) {
      auto train = load_qa_data(tqa_train, tqa_format, tqa_chunk);
      report(train.diagnostics);
      std::optional<corpus::Dataset> val;
      if (!tqa_val.empty()) {
        val = load_qa_data(tqa_val, tqa_format, tqa_chunk);
      } else if (common.val_fraction > 0.0) {
        auto [tr, va] = corpus::split_validation(train, common.val_fraction, common.seed);
        train = std::move(tr);
        val = std::move(va);
      }
      qa::QATrainConfig cfg;
      cfg.k_train = tqa_k;
      cfg.epochs = tqa_epochs;
      cfg.lr = tqa_lr;
      cfg.batch_size = tqa_batch;
      cfg.bpe_merges = tqa_merges;
      cfg.seed = common.seed;
      cfg.dropout = tqa_dropout;
      cfg.early_stopping_patience = tqa_patience;
      std::optional<qa::QAModel> init;
      if (!tqa_init.empty()) init = qa::QAModel::load(tqa_init);
      auto result = qa::train_qa(train, val ? &*val : nullptr, cfg, qa::EncoderSpec::preset_named(tqa_preset),
                                 std::move(init), [&](int epoch, const qa::QAModel&) {
                                   std::cerr << "epoch " << epoch << " done\n";
                                   return true;
                                 });
      for (const auto& h : result.history)
        std::cerr << "epoch " << h.epoch << " val_loss " << h.loss << " best " << h.best_so_far << "\n";
      report(result.diagnostics);
      result.model.save(tqa_out);
      std::cerr << "wrote " << tqa_out << "\n";
    } else if (*eqa) {
      const auto model = qa::QAModel::load(eqa_ckpt);
      const auto test = load_qa_data(eqa_test, eqa_format, eqa_chunk);
      const auto preds = qa::predict_dataset(model, test, retrieval_config(common, eqa_k));
      if (!eqa_preds.empty()) metrics::save_predictions(preds, eqa_preds);
      const auto rep = metrics::evaluate(test.examples, preds);
      write_text(eqa_report, rep.to_json(eqa_examples).dump(2) + "\n");
    } else if (*tqg) {
      auto provider = candidates::make_provider(common.syntax_provider);
      Diagnostics diag;
      qg::QGTrainInputs inputs;
      inputs.train = load_qg_data(tqg_train, *provider, diag);
      if (!tqg_val.empty()) {
        inputs.val = load_qg_data(tqg_val, *provider, diag);
      } else if (common.val_fraction > 0.0) {
        const auto n_val = static_cast<std::size_t>(common.val_fraction * static_cast<double>(inputs.train.size()));
        inputs.val.assign(inputs.train.end() - static_cast<std::ptrdiff_t>(n_val), inputs.train.end());
        inputs.train.resize(inputs.train.size() - n_val);
      }
      report(diag);
      auto mc = qg::QGModelConfig::preset_named(tqg_preset);
      auto tc = tqg_preset == "paper" ? qg::QGTrainConfig::paper() : qg::QGTrainConfig::desk();
      tc.seed = common.seed;
      if (tqg_steps) tc.max_steps = *tqg_steps;
      if (tqg_every) tc.validate_every = *tqg_every;
      if (tqg_batch) tc.batch_tokens = *tqg_batch;
      if (tqg_lr) tc.lr = *tqg_lr;
      if (tqg_dropout) mc.dropout = *tqg_dropout;
      std::optional<qg::QGModel> init;
      if (!tqg_init.empty()) {
        init = qg::QGModel::load(tqg_init);
        init->metadata["source_path"] = tqg_init;
      }
      auto result = qg::train_qg(inputs, qg::parse_regime(tqg_regime), std::move(init), mc, tc,
                                 [](std::int64_t step, const qg::QGModel&) {
                                   std::cerr << "step " << step << "\n";
                                   return true;
                                 });
      for (const auto& h : result.history)
        std::cerr << "step " << h.step << " val_loss " << h.loss << " best " << h.best_so_far << "\n";
      report(result.diagnostics);
      result.model.save(tqg_out);
      std::cerr << "wrote " << tqg_out << " after " << result.steps << " steps\n";
    } else if (*rg) {
      auto provider = candidates::make_provider(common.syntax_provider);
      std::string out;
      std::size_t skipped = 0;
      for (const auto& r : load_sentences(rg_in)) {
        const auto q = qg::toy_rule_generate(r.input, *provider);
        if (!q) {
          ++skipped;
          continue;
        }
        const auto span = r.input.answer_char_span.value();
        out += json{{"sentence", r.input.sentence},
                    {"answer_text", r.input.sentence.substr(span.begin, span.size())},
                    {"answer_char_start", span.begin},
                    {"question", *q}}
                   .dump() +
               "\n";
      }
      write_text(rg_out, out);
      std::cerr << "rules declined " << skipped << " inputs\n";
    } else if (*gen) {
      const auto model = qg::QGModel::load(gen_ckpt);
      std::vector<corpus::QGInput> inputs;
      for (auto& r : load_sentences(gen_in)) inputs.push_back(std::move(r.input));
      qg::BeamConfig beam;
      beam.beam_size = gen_beam;
      beam.max_decode_len = gen_max_len;
      beam.length_penalty = gen_alpha;
      Diagnostics diag;
      std::string out;
      for (const auto& g : qg::generate_questions(inputs, model, beam, &diag))
        out += json{{"input_index", g.input_index},
                    {"question", g.question},
                    {"log_prob", g.log_prob},
                    {"finished", g.finished},
                    {"failed", g.failed}}
                   .dump() +
               "\n";
      report(diag);
      write_text(gen_out, out);
    } else if (*cat) {
      const auto qg_model = qg::QGModel::load(cat_qg);
      const auto qa_model = qa::QAModel::load(cat_qa);
      auto provider = candidates::make_provider(common.syntax_provider);
      pipeline::CatalogConfig cfg;
      cfg.filter.overlap_threshold = cat_overlap;
      cfg.filter.measure = cat_measure == "jaccard" ? pipeline::OverlapMeasure::Jaccard : pipeline::OverlapMeasure::Coefficient;
      cfg.filter.self_redundancy_guard = !cat_no_guard;
      cfg.beam.beam_size = cat_beam;
      cfg.candidates.max_per_sentence = cat_cap;
      const auto result = pipeline::generate_catalog(corpus::read_file(cat_text), qg_model, qa_model, *provider, cfg);
      report(result.diagnostics);
      std::cerr << result.sentences << " sentences, " << result.generated << " questions, " << result.unanswerable
                << " unanswerable, " << result.items.size() << " kept\n";
      write_text(cat_out, pipeline::catalog_to_json(result.items).dump(2) + "\n");
    } else if (*ans) {
      const auto model = qa::QAModel::load(ans_qa);
      const auto doc = corpus::document_from_text("doc", corpus::read_file(ans_text), ans_chunk);
      if (doc.paragraphs.empty()) throw ConfigError("text has no tokens");
      const auto pred = model.predict(ans_q, doc, retrieval_config(common, std::min(common.top_k, doc.paragraphs.size())));
      json j{{"answerable", pred.answerable}, {"score", pred.score}};
      j["answer"] = pred.answerable ? json(pred.answer_text) : json(nullptr);
      std::cout << j.dump(2) << "\n";
    } else if (*qoq) {
      const auto qg_model = qg::QGModel::load(qoq_qg);
      const auto qa_model = qa::QAModel::load(qoq_qa);
      std::vector<corpus::QGExample> examples;
      std::vector<std::string> paragraphs;
      for (auto& r : load_sentences(qoq_in)) {
        if (!r.input.has_markers()) throw ParseError("qa-on-qg inputs need answer_text");
        examples.push_back({std::move(r.input), ""});
        paragraphs.push_back(std::move(r.paragraph));
      }
      qg::BeamConfig beam;
      beam.beam_size = qoq_beam;
      Diagnostics diag;
      const auto rep = pipeline::qa_on_qg_score(qg_model, qa_model, examples, paragraphs, beam, &diag);
      report(diag);
      std::cout << json{{"mean_f1", rep.mean_f1}, {"n", rep.n}, {"failures", rep.failures}}.dump(2) << "\n";
    } else if (*srv) {
      auto cfg = srv_config.empty() ? service::ServiceConfig{} : service::ServiceConfig::load(srv_config);
      if (!srv_host.empty()) cfg.host = srv_host;
      if (srv_port) cfg.port = *srv_port;
      cfg.syntax_provider = common.syntax_provider == "desk" ? cfg.syntax_provider : common.syntax_provider;
      cfg.apply_env();
      service::Service svc(cfg);
      service::HttpServer http(svc);
      std::thread loader([&] {
        try {
          svc.load_models();
          std::cerr << "models loaded\n";
        } catch (const std::exception& e) {
          std::cerr << "error: loading models failed: " << e.what() << "\n";
        }
      });
      std::cerr << "listening on " << cfg.host << ":" << cfg.port << "\n";
      const bool ok = http.listen(cfg.host, cfg.port);
      loader.join();
      return ok ? 0 : 1;
    } else if (*stub) {
      const auto text = corpus::read_file(stub_text);
      auto tok = bpe::Tokenizer::train({text}, stub_merges,
                                       {std::string(corpus::kAnswerOpen), std::string(corpus::kAnswerClose)});
      const std::vector<int> markers{tok.special_id(corpus::kAnswerOpen), tok.special_id(corpus::kAnswerClose)};
      auto vocab = ModelVocab::build({tok.encode(text)}, 1, markers);
      if (stub_kind == "qa") {
        qa::QAModel m(qa::EncoderSpec::desk(), std::move(tok), std::move(vocab), stub_seed);
        m.metadata = {{"version", "stub-qa-" + std::to_string(stub_seed)}};
        m.save(stub_out);
      } else {
        qg::QGModel m(qg::QGModelConfig::desk(), std::move(tok), std::move(vocab), stub_seed);
        m.metadata = {{"version", "stub-qg-" + std::to_string(stub_seed)}, {"regime", "standard"}};
        m.save(stub_out);
      }
    } else if (*ss) {
      auto provider = candidates::make_provider(common.syntax_provider);
      candidates::serve_provider(*provider, std::cin, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
