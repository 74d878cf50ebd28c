// Command-line entry point: ingest, annotate, index, search, run, eval,
// export-qrels, plus conformance and serve-stub for the model sidecar.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pcr/corpus.hpp"
#include "pcr/error.hpp"
#include "pcr/eval.hpp"
#include "pcr/pipeline.hpp"
#include "pcr/segmenter.hpp"
#include "pcr/sidecar.hpp"

namespace fs = std::filesystem;
using namespace pcr;

namespace {

volatile std::sig_atomic_t g_stop = 0;

ExperimentConfig resolve_config(const std::string& config_path, const std::string& corpus,
                                const std::string& out_dir) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
  if (!corpus.empty()) cfg.corpus = corpus;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.apply_environment();
  cfg.validate();
  if (cfg.corpus.empty()) throw ValidationError("no corpus given (use --corpus or a config file)");
  return cfg;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_ingest(const std::string& corpus_path, bool as_json) {
  auto loaded = load_corpus(corpus_path);
  print_warnings(loaded.report.warnings);
  const auto stats = corpus_stats(loaded.corpus);
  if (as_json) {
    nlohmann::ordered_json j;
    j["documents"] = stats.n_documents;
    j["avg_document_size"] = stats.avg_document_size;
    j["query_documents"] = stats.n_query_documents;
    j["citation_links"] = stats.total_citation_links;
    j["avg_citations_per_query"] = stats.avg_citations_per_query;
    j["vocabulary_size"] = stats.vocabulary_size;
    j["unknown_citations"] = loaded.report.unknown_citations.size();
    j["content_hash"] = loaded.corpus.content_hash();
    std::cout << j.dump(2) << '\n';
  } else {
    fmt::print("documents                {}\n", stats.n_documents);
    fmt::print("avg document size        {:.1f} chars\n", stats.avg_document_size);
    fmt::print("query documents          {}\n", stats.n_query_documents);
    fmt::print("citation links           {}\n", stats.total_citation_links);
    fmt::print("avg citations per query  {:.3f}\n", stats.avg_citations_per_query);
    fmt::print("vocabulary size          {}\n", stats.vocabulary_size);
    fmt::print("unknown citations        {}\n", loaded.report.unknown_citations.size());
    fmt::print("content hash             {}\n", loaded.corpus.content_hash());
  }
  return 0;
}

int cmd_annotate(const std::string& corpus_path, const std::string& strategy,
                 const std::string& cues, const std::string& endpoint, const std::string& out) {
  auto loaded = load_corpus(corpus_path);
  print_warnings(loaded.report.warnings);
  std::unique_ptr<RoleAnnotator> annotator;
  switch (parse_annotator_strategy(strategy)) {
    case AnnotatorStrategy::kFile:
      annotator = std::make_unique<FileAnnotator>();
      break;
    case AnnotatorStrategy::kHeuristic:
      annotator = std::make_unique<HeuristicAnnotator>(cues.empty() ? CueTable::builtin()
                                                                    : CueTable::load(cues));
      break;
    case AnnotatorStrategy::kExternal: {
      std::string ep = endpoint;
      if (const char* env = std::getenv("PCR_SCORER_ENDPOINT"); env && *env) ep = env;
      if (ep.empty()) throw ValidationError("the external annotator needs --endpoint");
      annotator = std::make_unique<ExternalAnnotator>(
          std::make_shared<SidecarClient>(Endpoint::parse(ep)));
      break;
    }
  }
  const Corpus annotated = annotate_corpus(loaded.corpus, *annotator);
  save_corpus(annotated, out);
  std::size_t sentences = 0;
  std::map<RhetoricalRole, std::size_t> counts;
  for (const auto& d : annotated.documents()) {
    sentences += d.sentences.size();
    for (const auto& s : d.sentences) ++counts[s.role];
  }
  fmt::print("annotated {} documents, {} sentences\n", annotated.size(), sentences);
  for (auto role : kAllRoles) fmt::print("  {:<10} {}\n", to_string(role), counts[role]);
  return 0;
}

int cmd_index(const ExperimentConfig& cfg) {
  auto loaded = load_corpus(cfg.corpus);
  const Corpus corpus = preprocess_corpus(loaded.corpus, cfg.preprocess, loaded.report);
  print_warnings(loaded.report.warnings);
  ExperimentConfig all = cfg;
  all.methods = {Method::kBm25Full, Method::kVector};
  const Indexes idx = build_indexes(corpus, all, make_backends(all));
  print_warnings(idx.warnings);
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(cfg.out_dir / "lexical.idx");
    idx.lexical->save(out);
  }
  {
    std::ofstream out(cfg.out_dir / "vector.ivf", std::ios::binary);
    idx.vector->save(out);
  }
  nlohmann::ordered_json meta;
  meta["corpus_hash"] = loaded.corpus.content_hash();
  meta["config"] = cfg.to_json();
  meta["embedder"] = idx.embedder->name();
  meta["nlist"] = idx.vector->nlist();
  std::ofstream(cfg.out_dir / "index.json") << meta.dump(2) << '\n';
  fmt::print("lexical: {} documents, {} terms\n", idx.lexical->n_docs(),
             idx.lexical->vocabulary_size());
  fmt::print("vector:  {} vectors, dimension {}, nlist {}\n", idx.vector->size(),
             idx.vector->dimension(), idx.vector->nlist());
  fmt::print("written to {}\n", cfg.out_dir.string());
  return 0;
}

int cmd_search(const ExperimentConfig& cfg, const std::string& method_name,
               const std::string& preset, const std::string& query_doc, const std::string& text,
               std::size_t top, const std::string& index_dir) {
  if (query_doc.empty() == text.empty()) {
    throw ValidationError("give exactly one of --query-doc and --text");
  }
  const Method method = parse_method(method_name);
  ExperimentConfig run_cfg = cfg;
  run_cfg.methods = {method};

  auto loaded = load_corpus(cfg.corpus);
  Corpus corpus = preprocess_corpus(loaded.corpus, cfg.preprocess, loaded.report);
  const Backends backends = make_backends(run_cfg);
  if (cfg.annotator == AnnotatorStrategy::kHeuristic) {
    corpus = annotate_corpus(corpus, HeuristicAnnotator(cfg.cues.empty() ? CueTable::builtin()
                                                                         : CueTable::load(cfg.cues)));
  } else if (cfg.annotator == AnnotatorStrategy::kExternal) {
    corpus = annotate_corpus(corpus, ExternalAnnotator(backends.scorer_client));
  }

  Indexes idx;
  if (index_dir.empty()) {
    idx = build_indexes(corpus, run_cfg, backends);
  } else {
    idx.corpus = &corpus;
    idx.embedder = backends.embedder;
    idx.scorer = backends.scorer;
    std::ifstream lex(fs::path(index_dir) / "lexical.idx");
    if (!lex) throw ValidationError("missing " + index_dir + "/lexical.idx");
    idx.lexical = InvertedIndex::load(lex, cfg.bm25);
    std::ifstream vec(fs::path(index_dir) / "vector.ivf", std::ios::binary);
    if (!vec) throw ValidationError("missing " + index_dir + "/vector.ivf");
    idx.vector = IvfFlatIndex::load(vec);
    if (idx.embedder && idx.embedder->dimension() != idx.vector->dimension()) {
      throw ValidationError("vector index dimension differs from the configured embedder");
    }
  }

  RoleQuery query;
  if (!query_doc.empty()) {
    query = make_role_query(corpus.at(query_doc), RoleConfig::preset(preset));
  } else {
    query = {"query", preset, mask_citations(text), {}, false};
    query.empty = query.text.find_first_not_of(" \t\r\n") == std::string::npos;
  }
  RankedList list = retrieve_query(query, method, idx, run_cfg);
  list.truncate(top);
  for (const auto& e : list.entries) {
    fmt::print("{}\t{}\t{}\n", e.rank, e.doc_id, format_score(e.score));
  }
  if (query.empty) std::cerr << "warning: the role-filtered query is empty\n";
  return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
  const auto result = run_experiment(cfg);
  for (const auto& w : result.manifest["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
  std::cout << result.report.render_table();
  fmt::print("outputs in {}\n", cfg.out_dir.string());
  return 0;
}

int cmd_eval(const std::vector<std::string>& runs, const std::string& qrels_path,
             std::size_t k_min, std::size_t k_max, const std::string& best_by,
             const std::string& out) {
  const Qrels qrels = Qrels::load(qrels_path);
  std::vector<RunSet> sets;
  for (const auto& path : runs) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open run file '" + path + "'");
    const std::string config = fs::path(path).stem().stem().string();
    for (auto& [method, lists] : read_run(in)) {
      std::string display = method;
      try {
        display = std::string(display_name(parse_method(method)));
      } catch (const ValidationError&) {
      }
      sets.push_back({config, method, display, std::move(lists)});
    }
  }
  const EvalReport report = sweep_and_report(sets, qrels, {k_min, k_max, parse_best_k_metric(best_by)});
  if (!out.empty()) {
    std::ofstream f(out);
    report.write_json(f);
  }
  std::cout << report.render_table();
  return 0;
}

int cmd_export_qrels(const std::string& corpus_path, const std::string& out) {
  auto loaded = load_corpus(corpus_path);
  print_warnings(loaded.report.warnings);
  if (out.empty() || out == "-") {
    write_qrels(loaded.corpus, std::cout);
  } else {
    std::ofstream f(out);
    if (!f) throw ValidationError("cannot write '" + out + "'");
    write_qrels(loaded.corpus, f);
  }
  return 0;
}

int cmd_conformance(const std::string& endpoint) {
  std::unique_ptr<StubSidecarServer> stub;
  Endpoint ep;
  if (endpoint.empty()) {
    stub = std::make_unique<StubSidecarServer>(StubSidecarServer::Options{});
    ep = stub->endpoint();
  } else {
    ep = Endpoint::parse(endpoint);
  }
  SidecarClient client(ep, {1, std::chrono::milliseconds(0), std::chrono::milliseconds(30000), 64});
  bool all = true;
  for (const auto& c : run_conformance(client)) {
    fmt::print("{} {}{}\n", c.passed ? "PASS" : "FAIL", c.name, c.detail.empty() ? "" : ": " + c.detail);
    all = all && c.passed;
  }
  return all ? 0 : static_cast<int>(ExitCode::kTransport);
}

int cmd_serve_stub(const std::string& endpoint, std::size_t dimension, std::size_t max_pair,
                   bool no_annotate) {
  StubSidecarServer server({dimension, max_pair, !no_annotate}, Endpoint::parse(endpoint));
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  fmt::print("serving on {}\n", server.endpoint().to_string());
  std::fflush(stdout);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prior case retrieval engine"};
  app.require_subcommand(1);

  std::string config_path, corpus, out_dir, out, strategy = "heuristic", cues, endpoint;
  std::string method = "trace_full", preset = "full", query_doc, text, index_dir, qrels;
  std::vector<std::string> runs;
  std::size_t top = 10, k_min = 1, k_max = 20, dimension = 768, max_pair = 0;
  bool as_json = false, no_annotate = false;

  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and print statistics");
  ingest->add_option("--corpus", corpus, "Corpus file (JSONL)")->required();
  ingest->add_flag("--json", as_json, "Print statistics as JSON");

  auto* annotate = app.add_subcommand("annotate", "Label sentences with rhetorical roles");
  annotate->add_option("--corpus", corpus, "Corpus file (JSONL)")->required();
  annotate->add_option("--strategy", strategy, "file, heuristic or external")->capture_default_str();
  annotate->add_option("--cues", cues, "Cue table for the heuristic strategy");
  annotate->add_option("--endpoint", endpoint, "Sidecar endpoint for the external strategy");
  annotate->add_option("--out", out, "Annotated corpus output")->required();

  auto* index = app.add_subcommand("index", "Build and save the lexical and vector indexes");
  index->add_option("--config", config_path, "Experiment config (JSON)");
  index->add_option("--corpus", corpus, "Corpus file, overrides the config");
  index->add_option("--out-dir", out_dir, "Index directory, overrides the config");

  auto* search = app.add_subcommand("search", "Retrieve for one ad-hoc query");
  search->add_option("--config", config_path, "Experiment config (JSON)");
  search->add_option("--corpus", corpus, "Corpus file, overrides the config");
  search->add_option("--method", method, "bm25_full, bm25_candidates, vector, cross_encoder, trace_full")
      ->capture_default_str();
  search->add_option("--preset", preset, "Role preset for --query-doc")->capture_default_str();
  search->add_option("--query-doc", query_doc, "Use this corpus document as the query");
  search->add_option("--text", text, "Free query text");
  search->add_option("--top", top, "Results to print")->capture_default_str();
  search->add_option("--index-dir", index_dir, "Load indexes saved by 'index'");

  auto* run = app.add_subcommand("run", "Run a full experiment");
  run->add_option("--config", config_path, "Experiment config (JSON)");
  run->add_option("--corpus", corpus, "Corpus file, overrides the config");
  run->add_option("--out-dir", out_dir, "Output directory, overrides the config");

  auto* eval = app.add_subcommand("eval", "Score existing run files against qrels");
  eval->add_option("--run", runs, "Run file(s)")->required();
  eval->add_option("--qrels", qrels, "Qrels file")->required();
  eval->add_option("--k-min", k_min, "Smallest cutoff")->capture_default_str();
  eval->add_option("--k-max", k_max, "Largest cutoff")->capture_default_str();
  std::string best_by = "f1";
  eval->add_option("--best-by", best_by, "Metric that picks k: f1, precision or recall")
      ->capture_default_str();
  eval->add_option("--out", out, "Write the report as JSON");

  auto* export_qrels = app.add_subcommand("export-qrels", "Write citation links as qrels");
  export_qrels->add_option("--corpus", corpus, "Corpus file (JSONL)")->required();
  export_qrels->add_option("--out", out, "Output file (default stdout)");

  auto* conformance = app.add_subcommand("conformance", "Check a sidecar endpoint against the protocol");
  conformance->add_option("--endpoint", endpoint, "Endpoint; omitted runs against the in-process stub");

  auto* serve = app.add_subcommand("serve-stub", "Serve the protocol from the stub models");
  std::string serve_endpoint = "127.0.0.1:7878";
  serve->add_option("--endpoint", serve_endpoint, "host:port or unix:/path")->capture_default_str();
  serve->add_option("--dimension", dimension, "Embedding dimension")->capture_default_str();
  serve->add_option("--max-pair-length", max_pair, "Advertised pair limit, 0 = none")
      ->capture_default_str();
  serve->add_flag("--no-annotate", no_annotate, "Decline the annotate kind");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
  }

  try {
    if (*ingest) return cmd_ingest(corpus, as_json);
    if (*annotate) return cmd_annotate(corpus, strategy, cues, endpoint, out);
    if (*index) return cmd_index(resolve_config(config_path, corpus, out_dir));
    if (*search) {
      return cmd_search(resolve_config(config_path, corpus, ""), method, preset, query_doc, text,
                        top, index_dir);
    }
    if (*run) return cmd_run(resolve_config(config_path, corpus, out_dir));
    if (*eval) return cmd_eval(runs, qrels, k_min, k_max, best_by, out);
    if (*export_qrels) return cmd_export_qrels(corpus, out);
    if (*conformance) return cmd_conformance(endpoint);
    if (*serve) return cmd_serve_stub(serve_endpoint, dimension, max_pair, no_annotate);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kValidation);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kStage);
  } catch (const TransportError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kTransport);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kStage);
  }
  return 0;
}
