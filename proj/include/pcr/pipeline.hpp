#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcr/corpus.hpp"
#include "pcr/eval.hpp"
#include "pcr/fusion.hpp"
#include "pcr/lexical.hpp"
#include "pcr/rerank.hpp"
#include "pcr/segmenter.hpp"
#include "pcr/vector.hpp"

namespace pcr {

class SidecarClient;

enum class Method { kBm25Full, kBm25Candidates, kVector, kCrossEncoder, kTraceFull };

std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view name);
/// Label used in report tables.
std::string_view display_name(Method method) noexcept;

/// Experiment description. JSON with nested sections; every key is optional:
///
///   corpus        ""            path to the corpus (JSONL)
///   qrels         ""            judgments file; empty derives them from citations
///   out_dir       "runs"
///   presets       ["full"]      role presets, or "custom:Facts,Issue"
///   methods       ["bm25_full", "vector", "trace_full"]
///   annotator     {strategy: "file", cues: ""}
///   k_vec         1000          candidate count and report depth
///   k_range       {min: 1, max: 20, best_by: "f1"}   best_by: f1, precision or recall
///   seed          0             k-means seed
///   threads       1             concurrent queries
///   preprocess    {mask_citations: true, drop_citation_sentences: false, citation_pattern}
///   bm25          {k1: 1.2, b: 0.75, lowercase: true, stopwords: []}
///   ivf           {nlist: 0, kmeans_iters: 10}          nlist 0 = min(2048, ceil(sqrt n))
///   search        {nprobe: 0}                           0 = ceil(nlist / 16)
///   rrf           {k: 60}
///   chunking      {max_chars: 2000, overlap_chars: 200, aggregation: "weighted_mean",
///                  rerank_depth: 100}
///   embedder      {kind: "hashing", dimension: 768, max_chars: 60000, endpoint: ""}
///   scorer        {kind: "stub", endpoint: ""}
///
/// PCR_SCORER_ENDPOINT, when set, replaces scorer.endpoint.
struct ExperimentConfig {
  std::filesystem::path corpus;
  std::filesystem::path qrels;
  std::filesystem::path out_dir = "runs";
  std::vector<std::string> presets = {"full"};
  std::vector<Method> methods = {Method::kBm25Full, Method::kVector, Method::kTraceFull};
  AnnotatorStrategy annotator = AnnotatorStrategy::kFile;
  std::filesystem::path cues;
  std::size_t k_vec = 1000;
  SweepOptions k_range;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  PreprocessOptions preprocess;
  Bm25Config bm25;
  IvfParams ivf;
  SearchParams search;
  RrfConfig rrf;
  ChunkingConfig chunking;
  std::string embedder_kind = "hashing";
  std::size_t embedder_dimension = 768;
  std::string embedder_endpoint;
  EmbedOptions embed;
  std::string scorer_kind = "stub";
  std::string scorer_endpoint;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
  /// Applies PCR_SCORER_ENDPOINT.
  void apply_environment();
  /// Throws ValidationError for out-of-range values.
  void validate() const;

  bool needs_lexical() const;
  bool needs_vector() const;
  bool needs_scorer() const;
};

/// Read-only retrieval state shared by all queries.
struct Indexes {
  const Corpus* corpus = nullptr;
  std::optional<InvertedIndex> lexical;
  std::optional<IvfFlatIndex> vector;
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const PairScorer> scorer;
  std::vector<std::string> warnings;
};

/// Embedder, scorer and annotator backends named by the config. Sidecar
/// backends share one client per endpoint.
struct Backends {
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const PairScorer> scorer;
  std::shared_ptr<SidecarClient> scorer_client;
};

Backends make_backends(const ExperimentConfig& config);

/// Builds only the indexes the configured methods need.
Indexes build_indexes(const Corpus& corpus, const ExperimentConfig& config,
                      const Backends& backends);

/// build_role_query, except that an unannotated document under the full
/// preset contributes its raw text.
RoleQuery make_role_query(const Document& document, const RoleConfig& config);

/// Intermediate lists of one retrieval, for inspection and tests.
struct RetrievalTrace {
  RankedList vector;
  RankedList bm25;
  RankedList fused;
  RerankReport rerank;
  bool query_truncated = false;
};

/// Runs one query through `method`. The query's own document never appears in
/// the output. An empty query yields an empty list. Throws StageError naming
/// the stage when a required index or backend is missing.
RankedList retrieve_query(const RoleQuery& query, Method method, const Indexes& indexes,
                          const ExperimentConfig& config, RetrievalTrace* trace = nullptr);

struct ExperimentResult {
  EvalReport report;
  nlohmann::ordered_json manifest;
  std::vector<std::filesystem::path> run_files;
};

/// Retrieves every query document for each preset x method, writes
/// `<preset>.<method>.run` files, report.json, report.txt and manifest.json
/// under out_dir, and returns the report. On failure the manifest is written
/// with status "failed", finished run files are kept, and the error is rethrown.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// File name of the run file for one preset and method.
std::string run_file_name(std::string_view preset, Method method);

}  // namespace pcr
