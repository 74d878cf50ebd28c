#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcr/ranked_list.hpp"

namespace pcr {

class Corpus;

using RelevantSet = std::set<std::string>;

/// Query id -> relevant doc ids. A query's own id is never relevant to it.
class Qrels {
 public:
  Qrels() = default;

  /// One entry per query document; relevant = its citations.
  static Qrels from_corpus(const Corpus& corpus);
  /// `query_id 0 doc_id relevance` lines, relevance in {0, 1}.
  static Qrels read(std::istream& in);
  static Qrels load(const std::filesystem::path& path);

  /// Adds a judged query (possibly with no relevant documents).
  void add_query(const std::string& query_id);
  void add(const std::string& query_id, const std::string& doc_id);

  bool contains(std::string_view query_id) const;
  /// Throws ValidationError for unknown queries.
  const RelevantSet& relevant(std::string_view query_id) const;
  const std::map<std::string, RelevantSet, std::less<>>& queries() const noexcept { return judged_; }

 private:
  std::map<std::string, RelevantSet, std::less<>> judged_;
};

/// |relevant ∩ top-k| / k; missing ranks count as non-relevant.
double precision_at_k(std::span<const std::string> ranking, const RelevantSet& relevant,
                      std::size_t k);
/// |relevant ∩ top-k| / |relevant|; 0 when relevant is empty.
double recall_at_k(std::span<const std::string> ranking, const RelevantSet& relevant,
                   std::size_t k);
/// Harmonic mean; 0 when p + r = 0.
double f1_at_k(double precision, double recall);
/// Mean over relevant documents of the precision at their ranks; unretrieved
/// relevant documents contribute 0.
double average_precision(std::span<const std::string> ranking, const RelevantSet& relevant);
/// 1 / rank of the first relevant document, 0 if none is retrieved.
double reciprocal_rank(std::span<const std::string> ranking, const RelevantSet& relevant);

struct JudgedRanking {
  std::vector<std::string> ranking;
  RelevantSet relevant;
};

/// Mean reciprocal rank over queries with non-empty relevant sets.
double mean_reciprocal_rank(std::span<const JudgedRanking> queries);

/// All rankings produced by one (role config, method) pair.
struct RunSet {
  std::string config;
  std::string method;
  std::string display_name;  // method when empty
  std::vector<RankedList> rankings;
};

struct MetricRow {
  std::string config;
  std::string method;
  std::string display_name;
  std::size_t k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double map = 0.0;
  double mrr = 0.0;
  std::size_t evaluated_queries = 0;
  std::size_t excluded_queries = 0;
};

/// Metric that picks the reported k of each run.
enum class BestKMetric { kF1, kPrecision, kRecall };

std::string_view to_string(BestKMetric metric) noexcept;
BestKMetric parse_best_k_metric(std::string_view name);

struct SweepOptions {
  std::size_t k_min = 1;
  std::size_t k_max = 20;
  BestKMetric best_by = BestKMetric::kF1;
};

struct EvalReport {
  static const std::vector<std::string>& columns();

  std::vector<MetricRow> rows;  // every (config, method, k)
  std::vector<MetricRow> best;  // one per (config, method), max metric then smaller k
  std::string manifest;         // path of the run manifest, if any

  void write_json(std::ostream& out) const;
  /// Aligned plain-text table in the Precision@k ... k layout.
  std::string render_table() const;
};

/// Removes self-retrievals, computes P/R/F1 at every k and MAP/MRR over the
/// full rankings, and picks the best k per run (ties go to the smaller k). Queries whose relevant set is
/// empty are excluded and counted. Throws ValidationError for query ids
/// missing from the qrels or an empty k range.
EvalReport sweep_and_report(std::span<const RunSet> runs, const Qrels& qrels,
                            const SweepOptions& options = {});

/// Run file: `query_id doc_id rank score method` per line.
void write_run(std::ostream& out, const RankedList& list, std::string_view method);
/// Groups lines by method, then query id (in file order).
std::map<std::string, std::vector<RankedList>> read_run(std::istream& in);

/// Shortest round-trip decimal form used in run files and reports.
std::string format_score(double value);

}  // namespace pcr
