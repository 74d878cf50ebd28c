#include "pcr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "pcr/error.hpp"
#include "pcr/sidecar.hpp"
#include "pcr/text.hpp"

namespace pcr {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::kBm25Full: return "bm25_full";
    case Method::kBm25Candidates: return "bm25_candidates";
    case Method::kVector: return "vector";
    case Method::kCrossEncoder: return "cross_encoder";
    case Method::kTraceFull: return "trace_full";
  }
  return "trace_full";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::kBm25Full, Method::kBm25Candidates, Method::kVector,
                 Method::kCrossEncoder, Method::kTraceFull}) {
    if (name == to_string(m)) return m;
  }
  throw ValidationError("unknown method '" + std::string(name) + "'");
}

std::string_view display_name(Method method) noexcept {
  switch (method) {
    case Method::kBm25Full: return "BM25";
    case Method::kBm25Candidates: return "BM25 (candidates)";
    case Method::kVector: return "Vector DB";
    case Method::kCrossEncoder: return "Cross-encoder (vector only)";
    case Method::kTraceFull: return "Cross-encoder";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown(const json& section, std::string_view where,
                    std::initializer_list<std::string_view> known) {
  if (!section.is_object()) throw ValidationError("config: '" + std::string(where) + "' must be an object");
  for (const auto& [key, _] : section.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError("config: unknown key '" + std::string(where) + "." + key + "'");
    }
  }
}

const json& section(const json& j, const char* name) {
  static const json kEmpty = json::object();
  return j.contains(name) ? j.at(name) : kEmpty;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    reject_unknown(j, "config",
                   {"corpus", "qrels", "out_dir", "presets", "methods", "annotator", "k_vec",
                    "k_range", "seed", "threads", "preprocess", "bm25", "ivf", "search", "rrf",
                    "chunking", "embedder", "scorer"});
    c.corpus = j.value("corpus", std::string());
    c.qrels = j.value("qrels", std::string());
    c.out_dir = j.value("out_dir", c.out_dir.string());
    c.presets = j.value("presets", c.presets);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods").get<std::vector<std::string>>()) {
        c.methods.push_back(parse_method(m));
      }
    }
    const auto& ann = section(j, "annotator");
    reject_unknown(ann, "annotator", {"strategy", "cues"});
    c.annotator = parse_annotator_strategy(ann.value("strategy", std::string("file")));
    c.cues = ann.value("cues", std::string());

    c.k_vec = j.value("k_vec", c.k_vec);
    const auto& kr = section(j, "k_range");
    reject_unknown(kr, "k_range", {"min", "max", "best_by"});
    c.k_range.k_min = kr.value("min", c.k_range.k_min);
    c.k_range.k_max = kr.value("max", c.k_range.k_max);
    c.k_range.best_by = parse_best_k_metric(kr.value("best_by", std::string("f1")));
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);

    const auto& pre = section(j, "preprocess");
    reject_unknown(pre, "preprocess", {"mask_citations", "drop_citation_sentences", "citation_pattern"});
    c.preprocess.mask_citations = pre.value("mask_citations", c.preprocess.mask_citations);
    c.preprocess.drop_citation_sentences =
        pre.value("drop_citation_sentences", c.preprocess.drop_citation_sentences);
    c.preprocess.citation_pattern = pre.value("citation_pattern", c.preprocess.citation_pattern);

    const auto& bm = section(j, "bm25");
    reject_unknown(bm, "bm25", {"k1", "b", "lowercase", "stopwords"});
    c.bm25.k1 = bm.value("k1", c.bm25.k1);
    c.bm25.b = bm.value("b", c.bm25.b);
    c.bm25.lowercase = bm.value("lowercase", c.bm25.lowercase);
    c.bm25.stopwords = bm.value("stopwords", c.bm25.stopwords);

    const auto& ivf = section(j, "ivf");
    reject_unknown(ivf, "ivf", {"nlist", "kmeans_iters"});
    c.ivf.nlist = ivf.value("nlist", c.ivf.nlist);
    c.ivf.kmeans_iters = ivf.value("kmeans_iters", c.ivf.kmeans_iters);

    const auto& search = section(j, "search");
    reject_unknown(search, "search", {"nprobe"});
    c.search.nprobe = search.value("nprobe", c.search.nprobe);

    const auto& rrf = section(j, "rrf");
    reject_unknown(rrf, "rrf", {"k"});
    c.rrf.k_const = rrf.value("k", c.rrf.k_const);

    const auto& ch = section(j, "chunking");
    reject_unknown(ch, "chunking", {"max_chars", "overlap_chars", "aggregation", "rerank_depth"});
    c.chunking.max_chars = ch.value("max_chars", c.chunking.max_chars);
    c.chunking.overlap_chars = ch.value("overlap_chars", c.chunking.overlap_chars);
    c.chunking.aggregation =
        parse_aggregation(ch.value("aggregation", std::string(to_string(c.chunking.aggregation))));
    c.chunking.rerank_depth = ch.value("rerank_depth", c.chunking.rerank_depth);

    const auto& emb = section(j, "embedder");
    reject_unknown(emb, "embedder", {"kind", "dimension", "max_chars", "endpoint"});
    c.embedder_kind = emb.value("kind", c.embedder_kind);
    c.embedder_dimension = emb.value("dimension", c.embedder_dimension);
    c.embed.max_chars = emb.value("max_chars", c.embed.max_chars);
    c.embedder_endpoint = emb.value("endpoint", c.embedder_endpoint);

    const auto& sc = section(j, "scorer");
    reject_unknown(sc, "scorer", {"kind", "endpoint"});
    c.scorer_kind = sc.value("kind", c.scorer_kind);
    c.scorer_endpoint = sc.value("endpoint", c.scorer_endpoint);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.ivf.seed = c.seed;
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path.string() + "': " + e.what());
  }
  auto c = from_json(j);
  // Relative paths inside a config file resolve against its directory.
  const fs::path base = path.parent_path();
  for (fs::path* p : {&c.corpus, &c.qrels, &c.cues}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["corpus"] = corpus.string();
  j["qrels"] = qrels.string();
  j["out_dir"] = out_dir.string();
  j["presets"] = presets;
  j["methods"] = ordered_json::array();
  for (auto m : methods) j["methods"].push_back(to_string(m));
  j["annotator"] = {{"strategy", to_string(annotator)}, {"cues", cues.string()}};
  j["k_vec"] = k_vec;
  j["k_range"] = {
      {"min", k_range.k_min}, {"max", k_range.k_max}, {"best_by", to_string(k_range.best_by)}};
  j["seed"] = seed;
  j["threads"] = threads;
  j["preprocess"] = {{"mask_citations", preprocess.mask_citations},
                     {"drop_citation_sentences", preprocess.drop_citation_sentences},
                     {"citation_pattern", preprocess.citation_pattern}};
  j["bm25"] = {{"k1", bm25.k1},
               {"b", bm25.b},
               {"lowercase", bm25.lowercase},
               {"stopwords", bm25.stopwords}};
  j["ivf"] = {{"nlist", ivf.nlist}, {"kmeans_iters", ivf.kmeans_iters}};
  j["search"] = {{"nprobe", search.nprobe}};
  j["rrf"] = {{"k", rrf.k_const}};
  j["chunking"] = {{"max_chars", chunking.max_chars},
                   {"overlap_chars", chunking.overlap_chars},
                   {"aggregation", to_string(chunking.aggregation)},
                   {"rerank_depth", chunking.rerank_depth}};
  j["embedder"] = {{"kind", embedder_kind},
                   {"dimension", embedder_dimension},
                   {"max_chars", embed.max_chars},
                   {"endpoint", embedder_endpoint}};
  j["scorer"] = {{"kind", scorer_kind}, {"endpoint", scorer_endpoint}};
  return j;
}

void ExperimentConfig::apply_environment() {
  if (const char* ep = std::getenv("PCR_SCORER_ENDPOINT"); ep && *ep) scorer_endpoint = ep;
}

void ExperimentConfig::validate() const {
  if (presets.empty()) throw ValidationError("config: no role presets");
  for (const auto& p : presets) RoleConfig::preset(p);
  if (methods.empty()) throw ValidationError("config: no methods");
  if (k_vec == 0) throw ValidationError("config: k_vec must be >= 1");
  if (k_range.k_min == 0 || k_range.k_max < k_range.k_min) {
    throw ValidationError("config: k_range must satisfy 1 <= min <= max");
  }
  if (threads == 0) throw ValidationError("config: threads must be >= 1");
  bm25.validate();
  chunking.validate();
  if (rrf.k_const <= 0) throw ValidationError("config: rrf.k must be > 0");
  if (ivf.kmeans_iters == 0) throw ValidationError("config: ivf.kmeans_iters must be >= 1");
  if (embed.max_chars == 0) throw ValidationError("config: embedder.max_chars must be >= 1");
  if (embedder_kind != "hashing" && embedder_kind != "sidecar") {
    throw ValidationError("config: embedder.kind must be 'hashing' or 'sidecar'");
  }
  if (embedder_kind == "hashing" && embedder_dimension == 0) {
    throw ValidationError("config: embedder.dimension must be >= 1");
  }
  if (scorer_kind != "stub" && scorer_kind != "sidecar") {
    throw ValidationError("config: scorer.kind must be 'stub' or 'sidecar'");
  }
  if (scorer_kind == "sidecar" && scorer_endpoint.empty()) {
    throw ValidationError("config: scorer.kind 'sidecar' needs scorer.endpoint");
  }
  if (embedder_kind == "sidecar" && embedder_endpoint.empty() && scorer_endpoint.empty()) {
    throw ValidationError("config: embedder.kind 'sidecar' needs an endpoint");
  }
  if (annotator == AnnotatorStrategy::kExternal && scorer_endpoint.empty()) {
    throw ValidationError("config: the external annotator needs scorer.endpoint");
  }
  if (!preprocess.citation_pattern.empty()) CitationMasker{preprocess.citation_pattern};
}

bool ExperimentConfig::needs_lexical() const {
  return std::any_of(methods.begin(), methods.end(), [](Method m) {
    return m == Method::kBm25Full || m == Method::kBm25Candidates || m == Method::kTraceFull;
  });
}

bool ExperimentConfig::needs_vector() const {
  return std::any_of(methods.begin(), methods.end(),
                     [](Method m) { return m != Method::kBm25Full; });
}

bool ExperimentConfig::needs_scorer() const {
  return std::any_of(methods.begin(), methods.end(), [](Method m) {
    return m == Method::kCrossEncoder || m == Method::kTraceFull;
  });
}

// ---------------------------------------------------------------------------
// Backends and indexes

Backends make_backends(const ExperimentConfig& config) {
  Backends b;
  std::map<std::string, std::shared_ptr<SidecarClient>> clients;
  auto client_for = [&](const std::string& endpoint) {
    auto& c = clients[endpoint];
    if (!c) c = std::make_shared<SidecarClient>(Endpoint::parse(endpoint));
    return c;
  };
  if (config.needs_vector()) {
    if (config.embedder_kind == "sidecar") {
      const auto& ep =
          config.embedder_endpoint.empty() ? config.scorer_endpoint : config.embedder_endpoint;
      b.embedder = std::make_shared<SidecarEmbedder>(client_for(ep));
    } else {
      b.embedder = std::make_shared<HashingEmbedder>(config.embedder_dimension);
    }
  }
  if (config.needs_scorer()) {
    if (config.scorer_kind == "sidecar") {
      b.scorer = std::make_shared<SidecarPairScorer>(client_for(config.scorer_endpoint));
    } else {
      b.scorer = std::make_shared<JaccardPairScorer>();
    }
  }
  if (!config.scorer_endpoint.empty() &&
      (config.scorer_kind == "sidecar" || config.annotator == AnnotatorStrategy::kExternal)) {
    b.scorer_client = client_for(config.scorer_endpoint);
  }
  return b;
}

Indexes build_indexes(const Corpus& corpus, const ExperimentConfig& config,
                      const Backends& backends) {
  Indexes idx;
  idx.corpus = &corpus;
  idx.embedder = backends.embedder;
  idx.scorer = backends.scorer;
  if (corpus.empty()) throw StageError("index", "corpus is empty");

  if (config.needs_lexical()) {
    try {
      idx.lexical = build_index(corpus, config.bm25);
    } catch (const ValidationError& e) {
      throw StageError("lexical index", e.what());
    }
  }
  if (config.needs_vector()) {
    if (!backends.embedder) throw StageError("vector index", "no embedder configured");
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& d : corpus.documents()) texts.push_back(d.raw_text);
    const auto batch = embed_texts(texts, *backends.embedder, config.embed);
    if (!batch.truncated.empty()) {
      idx.warnings.push_back(fmt::format("{} document(s) truncated to {} characters before embedding",
                                         batch.truncated.size(), config.embed.max_chars));
    }
    if (!batch.zero_vectors.empty()) {
      idx.warnings.push_back(
          fmt::format("{} document(s) embedded to the zero vector", batch.zero_vectors.size()));
    }
    std::map<std::string, Embedding> embeddings;
    const auto docs = corpus.documents();
    for (std::size_t i = 0; i < docs.size(); ++i) embeddings.emplace(docs[i].doc_id, batch.vectors[i]);
    try {
      idx.vector = build_ivf(embeddings, config.ivf);
    } catch (const ValidationError& e) {
      throw StageError("vector index", e.what());
    }
    if (idx.vector->nlist_clamped()) {
      idx.warnings.push_back(fmt::format("nlist {} clamped to {} (corpus size)",
                                         idx.vector->requested_nlist(), idx.vector->nlist()));
    }
    if (config.search.nprobe > idx.vector->nlist()) {
      idx.warnings.push_back(fmt::format("nprobe {} clamped to nlist {}", config.search.nprobe,
                                         idx.vector->nlist()));
    }
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Retrieval

RoleQuery make_role_query(const Document& document, const RoleConfig& config) {
  if (config.is_full() && !document.annotated()) {
    RoleQuery q{document.doc_id, config.name, document.raw_text, {}, false};
    q.empty = text::normalize_whitespace(q.text).empty();
    return q;
  }
  return build_role_query(document, config);
}

namespace {

ListSource source_of(Method method) {
  switch (method) {
    case Method::kVector: return ListSource::kVector;
    case Method::kBm25Full:
    case Method::kBm25Candidates: return ListSource::kBm25;
    case Method::kCrossEncoder:
    case Method::kTraceFull: return ListSource::kRerank;
  }
  return ListSource::kRerank;
}

template <typename F>
auto in_stage(const char* stage, F&& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    throw StageError(stage, e.what());
  }
}

RankedList vector_stage(const RoleQuery& q, const Indexes& idx, const ExperimentConfig& config,
                        RetrievalTrace* trace) {
  if (!idx.vector || !idx.embedder) throw StageError("vector", "vector index not built");
  const std::vector<std::string> texts = {q.text};
  const auto batch = embed_texts(texts, *idx.embedder, config.embed);
  if (trace) trace->query_truncated = !batch.truncated.empty();
  SearchParams params = config.search;
  params.nprobe = std::min(params.nprobe, idx.vector->nlist());
  params.top_k = std::min(config.k_vec + 1, idx.vector->size());
  auto list = in_stage("vector", [&] {
    return search_ivf(*idx.vector, batch.vectors.front(), params, q.query_id);
  });
  list.remove(q.query_id);
  list.truncate(config.k_vec);
  return list;
}

RankedList rerank_stage(const RoleQuery& q, const RankedList& input, const Indexes& idx,
                        const ExperimentConfig& config, RetrievalTrace* trace) {
  if (!idx.scorer) throw StageError("rerank", "no pair scorer configured");
  if (input.empty()) return {q.query_id, ListSource::kRerank, {}};
  RerankReport report;
  auto out = in_stage("rerank", [&] {
    return rerank(q, input, *idx.scorer, config.chunking, *idx.corpus, &report);
  });
  if (trace) trace->rerank = report;
  return out;
}

}  // namespace

RankedList retrieve_query(const RoleQuery& query, Method method, const Indexes& indexes,
                          const ExperimentConfig& config, RetrievalTrace* trace) {
  if (query.empty) return {query.query_id, source_of(method), {}};
  if (!indexes.corpus) throw StageError("retrieve", "indexes carry no corpus");
  const bool needs_lexical = method == Method::kBm25Full || method == Method::kBm25Candidates ||
                             method == Method::kTraceFull;
  if (needs_lexical && !indexes.lexical) throw StageError("bm25", "lexical index not built");
  const auto tokens = tokenize(query.text, config.bm25);

  RankedList out;
  if (method == Method::kBm25Full) {
    out = in_stage("bm25", [&] {
      return search_bm25(query.query_id, tokens, *indexes.lexical, config.bm25,
                         std::min(config.k_vec + 1, indexes.lexical->n_docs()));
    });
    out.remove(query.query_id);
    out.truncate(config.k_vec);
    if (trace) trace->bm25 = out;
    return out;
  }

  RankedList vec = vector_stage(query, indexes, config, trace);
  if (trace) trace->vector = vec;
  switch (method) {
    case Method::kVector:
      out = std::move(vec);
      break;
    case Method::kBm25Candidates: {
      const auto candidates = vec.doc_ids();
      out = in_stage("bm25", [&] {
        return score_candidates(query.query_id, tokens, candidates, *indexes.lexical, config.bm25);
      });
      if (trace) trace->bm25 = out;
      break;
    }
    case Method::kCrossEncoder:
      out = rerank_stage(query, vec, indexes, config, trace);
      break;
    case Method::kTraceFull: {
      const auto candidates = vec.doc_ids();
      RankedList bm = in_stage("bm25", [&] {
        return score_candidates(query.query_id, tokens, candidates, *indexes.lexical, config.bm25);
      });
      if (trace) trace->bm25 = bm;
      if (vec.empty()) {
        out = {query.query_id, ListSource::kRerank, {}};
        break;
      }
      const std::vector<RankedList> lists = {vec, bm};
      RankedList fused = in_stage("rrf", [&] { return rrf_fuse(lists, config.rrf); });
      if (trace) trace->fused = fused;
      out = rerank_stage(query, fused, indexes, config, trace);
      break;
    }
    case Method::kBm25Full:
      break;
  }
  out.remove(query.query_id);
  return out;
}

// ---------------------------------------------------------------------------
// Experiment

std::string run_file_name(std::string_view preset, Method method) {
  std::string name;
  for (char c : preset) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    name.push_back(keep ? c : '_');
  }
  return name + "." + std::string(to_string(method)) + ".run";
}

namespace {

std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct QueryOutcome {
  RankedList list;
  bool query_truncated = false;
  bool rerank_query_truncated = false;
};

std::vector<QueryOutcome> retrieve_all(const std::vector<RoleQuery>& queries, Method method,
                                       const Indexes& indexes, const ExperimentConfig& config) {
  std::vector<QueryOutcome> out(queries.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      try {
        RetrievalTrace trace;
        out[i].list = retrieve_query(queries[i], method, indexes, config, &trace);
        out[i].query_truncated = trace.query_truncated;
        out[i].rerank_query_truncated = trace.rerank.query_truncated;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = queries.size();
      }
    }
  };
  const std::size_t n_threads = std::min(config.threads, std::max<std::size_t>(queries.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  auto& m = result.manifest;
  m["status"] = "running";
  m["started_at"] = utc_now();
  m["config"] = config.to_json();
  m["choices"] = {{"truncation", "after citation masking"},
                  {"query_truncation", "queries truncated like documents"},
                  {"empty_query", "empty ranking"}};
  ordered_json timings = ordered_json::object();
  std::vector<std::string> warnings;

  const fs::path out_dir = config.out_dir;
  auto write_manifest = [&] {
    m["timings_seconds"] = timings;
    m["warnings"] = warnings;
    m["run_files"] = ordered_json::array();
    for (const auto& p : result.run_files) m["run_files"].push_back(p.filename().string());
    m["finished_at"] = utc_now();
    std::ofstream out(out_dir / "manifest.json");
    out << m.dump(2) << '\n';
  };

  try {
    config.validate();
    fs::create_directories(out_dir);
    Stopwatch total;

    Stopwatch sw;
    auto loaded = load_corpus(config.corpus);
    Corpus corpus = preprocess_corpus(loaded.corpus, config.preprocess, loaded.report);
    warnings.insert(warnings.end(), loaded.report.warnings.begin(), loaded.report.warnings.end());
    m["corpus"] = {{"path", config.corpus.string()},
                   {"content_hash", loaded.corpus.content_hash()},
                   {"documents", loaded.corpus.size()},
                   {"query_documents", loaded.corpus.query_ids().size()}};
    timings["load"] = sw.seconds();

    sw = Stopwatch();
    const Backends backends = make_backends(config);
    switch (config.annotator) {
      case AnnotatorStrategy::kFile:
        break;
      case AnnotatorStrategy::kHeuristic:
        corpus = annotate_corpus(
            corpus, HeuristicAnnotator(config.cues.empty() ? CueTable::builtin()
                                                           : CueTable::load(config.cues)));
        break;
      case AnnotatorStrategy::kExternal:
        corpus = annotate_corpus(corpus, ExternalAnnotator(backends.scorer_client));
        break;
    }
    timings["annotate"] = sw.seconds();

    const Qrels qrels = config.qrels.empty() ? Qrels::from_corpus(corpus) : Qrels::load(config.qrels);
    std::vector<std::string> query_ids;
    for (const auto& [qid, _] : qrels.queries()) {
      if (corpus.contains(qid)) {
        query_ids.push_back(qid);
      } else {
        warnings.push_back("qrels query '" + qid + "' is not in the corpus; skipped");
      }
    }

    sw = Stopwatch();
    const Indexes indexes = build_indexes(corpus, config, backends);
    warnings.insert(warnings.end(), indexes.warnings.begin(), indexes.warnings.end());
    timings["index"] = sw.seconds();
    ordered_json effective;
    effective["embedder"] = indexes.embedder ? indexes.embedder->name() : "none";
    effective["dimension"] = indexes.embedder ? indexes.embedder->dimension() : 0;
    effective["scorer"] = indexes.scorer ? indexes.scorer->name() : "none";
    if (indexes.vector) {
      effective["nlist"] = indexes.vector->nlist();
      const std::size_t nprobe = config.search.nprobe == 0
                                     ? SearchParams::default_nprobe(indexes.vector->nlist())
                                     : std::min(config.search.nprobe, indexes.vector->nlist());
      effective["nprobe"] = nprobe;
    }
    effective["rrf_k"] = config.rrf.k_const;
    effective["seed"] = config.seed;
    effective["annotator"] = to_string(config.annotator);
    m["effective"] = effective;

    std::vector<RunSet> runs;
    ordered_json retrieval_timings = ordered_json::object();
    for (const auto& preset : config.presets) {
      const RoleConfig roles = RoleConfig::preset(preset);
      std::vector<RoleQuery> queries;
      queries.reserve(query_ids.size());
      std::size_t empty = 0;
      for (const auto& qid : query_ids) {
        queries.push_back(make_role_query(corpus.at(qid), roles));
        empty += queries.back().empty;
      }
      if (empty > 0) {
        warnings.push_back(fmt::format("preset {}: {} empty role quer{}", preset, empty,
                                       empty == 1 ? "y" : "ies"));
      }
      for (const Method method : config.methods) {
        sw = Stopwatch();
        auto outcomes = retrieve_all(queries, method, indexes, config);
        std::size_t truncated = 0, rerank_truncated = 0;
        RunSet run{preset, std::string(to_string(method)), std::string(display_name(method)), {}};
        const fs::path path = out_dir / run_file_name(preset, method);
        std::ofstream out(path);
        if (!out) throw StageError("output", "cannot write '" + path.string() + "'");
        for (auto& o : outcomes) {
          truncated += o.query_truncated;
          rerank_truncated += o.rerank_query_truncated;
          write_run(out, o.list, run.method);
          run.rankings.push_back(std::move(o.list));
        }
        out.close();
        result.run_files.push_back(path);
        runs.push_back(std::move(run));
        retrieval_timings[preset + "." + std::string(to_string(method))] = sw.seconds();
        if (truncated > 0) {
          warnings.push_back(fmt::format("{}.{}: {} query text(s) truncated before embedding",
                                         preset, to_string(method), truncated));
        }
        if (rerank_truncated > 0) {
          warnings.push_back(fmt::format("{}.{}: {} query text(s) truncated for pair scoring",
                                         preset, to_string(method), rerank_truncated));
        }
      }
    }
    timings["retrieve"] = retrieval_timings;

    sw = Stopwatch();
    result.report = sweep_and_report(runs, qrels, config.k_range);
    result.report.manifest = "manifest.json";
    {
      std::ofstream out(out_dir / "report.json");
      result.report.write_json(out);
    }
    {
      std::ofstream out(out_dir / "report.txt");
      out << result.report.render_table();
    }
    timings["evaluate"] = sw.seconds();
    timings["total"] = total.seconds();
    m["status"] = "ok";
    write_manifest();
  } catch (const std::exception& e) {
    m["status"] = "failed";
    m["error"] = e.what();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!ec) write_manifest();
    throw;
  }
  return result;
}

}  // namespace pcr
