#include "pcr/eval.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pcr/corpus.hpp"
#include "pcr/error.hpp"

namespace pcr {

// ---------------------------------------------------------------------------
// Qrels

Qrels Qrels::from_corpus(const Corpus& corpus) {
  Qrels q;
  for (const auto& id : corpus.query_ids()) {
    q.add_query(id);
    for (const auto& cited : corpus.at(id).cited_doc_ids) q.add(id, cited);
  }
  return q;
}

Qrels Qrels::read(std::istream& in) {
  Qrels q;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string qid, iter, doc, extra;
    int rel = -1;
    if (!(fields >> qid)) continue;
    if (!(fields >> iter >> doc >> rel) || (fields >> extra) || (rel != 0 && rel != 1)) {
      throw ValidationError("qrels line " + std::to_string(line_no) +
                            ": expected 'query_id 0 doc_id relevance' with relevance 0 or 1");
    }
    q.add_query(qid);
    if (rel == 1) q.add(qid, doc);
  }
  return q;
}

Qrels Qrels::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open qrels file '" + path.string() + "'");
  return read(in);
}

void Qrels::add_query(const std::string& query_id) { judged_[query_id]; }

void Qrels::add(const std::string& query_id, const std::string& doc_id) {
  auto& rel = judged_[query_id];
  if (doc_id != query_id) rel.insert(doc_id);
}

bool Qrels::contains(std::string_view query_id) const {
  return judged_.find(query_id) != judged_.end();
}

const RelevantSet& Qrels::relevant(std::string_view query_id) const {
  auto it = judged_.find(query_id);
  if (it == judged_.end()) {
    throw ValidationError("query '" + std::string(query_id) + "' has no relevance judgments");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

std::size_t hits_at(std::span<const std::string> ranking, const RelevantSet& relevant,
                    std::size_t k) {
  const std::size_t depth = std::min(k, ranking.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) hits += relevant.count(ranking[i]);
  return hits;
}

}  // namespace

double precision_at_k(std::span<const std::string> ranking, const RelevantSet& relevant,
                      std::size_t k) {
  if (k == 0) throw ValidationError("precision@k needs k >= 1");
  return static_cast<double>(hits_at(ranking, relevant, k)) / static_cast<double>(k);
}

double recall_at_k(std::span<const std::string> ranking, const RelevantSet& relevant,
                   std::size_t k) {
  if (k == 0) throw ValidationError("recall@k needs k >= 1");
  if (relevant.empty()) return 0.0;
  return static_cast<double>(hits_at(ranking, relevant, k)) /
         static_cast<double>(relevant.size());
}

double f1_at_k(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double average_precision(std::span<const std::string> ranking, const RelevantSet& relevant) {
  if (relevant.empty()) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (relevant.count(ranking[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double reciprocal_rank(std::span<const std::string> ranking, const RelevantSet& relevant) {
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (relevant.count(ranking[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double mean_reciprocal_rank(std::span<const JudgedRanking> queries) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& q : queries) {
    if (q.relevant.empty()) continue;
    sum += reciprocal_rank(q.ranking, q.relevant);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Sweep

std::string_view to_string(BestKMetric metric) noexcept {
  switch (metric) {
    case BestKMetric::kF1: return "f1";
    case BestKMetric::kPrecision: return "precision";
    case BestKMetric::kRecall: return "recall";
  }
  return "f1";
}

BestKMetric parse_best_k_metric(std::string_view name) {
  if (name == "f1") return BestKMetric::kF1;
  if (name == "precision") return BestKMetric::kPrecision;
  if (name == "recall") return BestKMetric::kRecall;
  throw ValidationError("unknown best-k metric '" + std::string(name) + "'");
}

const std::vector<std::string>& EvalReport::columns() {
  static const std::vector<std::string> kColumns = {"Precision@k", "Recall@k", "F1-score@k",
                                                    "MAP",         "MRR",      "k"};
  return kColumns;
}

EvalReport sweep_and_report(std::span<const RunSet> runs, const Qrels& qrels,
                            const SweepOptions& options) {
  if (options.k_min == 0 || options.k_max < options.k_min) {
    throw ValidationError("k range must satisfy 1 <= k_min <= k_max");
  }
  EvalReport report;
  for (const auto& run : runs) {
    const std::string display = run.display_name.empty() ? run.method : run.display_name;

    std::vector<JudgedRanking> judged;
    std::size_t excluded = 0;
    for (const auto& list : run.rankings) {
      const RelevantSet& relevant = qrels.relevant(list.query_id);
      if (relevant.empty()) {
        ++excluded;
        continue;
      }
      JudgedRanking jr{{}, relevant};
      for (const auto& e : list.entries) {
        if (e.doc_id != list.query_id) jr.ranking.push_back(e.doc_id);
      }
      judged.push_back(std::move(jr));
    }

    const double n = static_cast<double>(judged.size());
    double map = 0.0;
    for (const auto& q : judged) map += average_precision(q.ranking, q.relevant);
    map = judged.empty() ? 0.0 : map / n;
    const double mrr = mean_reciprocal_rank(judged);

    const std::size_t first_row = report.rows.size();
    for (std::size_t k = options.k_min; k <= options.k_max; ++k) {
      MetricRow row{run.config, run.method, display, k, 0, 0, 0, map, mrr, judged.size(), excluded};
      for (const auto& q : judged) {
        const double p = precision_at_k(q.ranking, q.relevant, k);
        const double r = recall_at_k(q.ranking, q.relevant, k);
        row.precision += p;
        row.recall += r;
        row.f1 += f1_at_k(p, r);
      }
      if (!judged.empty()) {
        row.precision /= n;
        row.recall /= n;
        row.f1 /= n;
      }
      report.rows.push_back(std::move(row));
    }
    auto key = [&](const MetricRow& r) {
      switch (options.best_by) {
        case BestKMetric::kPrecision: return r.precision;
        case BestKMetric::kRecall: return r.recall;
        case BestKMetric::kF1: break;
      }
      return r.f1;
    };
    std::size_t best = first_row;
    for (std::size_t i = first_row + 1; i < report.rows.size(); ++i) {
      if (key(report.rows[i]) > key(report.rows[best])) best = i;
    }
    report.best.push_back(report.rows[best]);
  }
  return report;
}

namespace {

nlohmann::ordered_json row_json(const MetricRow& r) {
  nlohmann::ordered_json j;
  j["config"] = r.config;
  j["method"] = r.method;
  j["model"] = r.display_name;
  j["Precision@k"] = r.precision;
  j["Recall@k"] = r.recall;
  j["F1-score@k"] = r.f1;
  j["MAP"] = r.map;
  j["MRR"] = r.mrr;
  j["k"] = r.k;
  j["evaluated_queries"] = r.evaluated_queries;
  j["excluded_queries"] = r.excluded_queries;
  return j;
}

}  // namespace

void EvalReport::write_json(std::ostream& out) const {
  nlohmann::ordered_json j;
  j["columns"] = columns();
  j["best"] = nlohmann::ordered_json::array();
  for (const auto& r : best) j["best"].push_back(row_json(r));
  j["sweep"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) j["sweep"].push_back(row_json(r));
  if (!manifest.empty()) j["manifest"] = manifest;
  out << j.dump(2) << '\n';
}

std::string EvalReport::render_table() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"Query", "Model"};
  for (const auto& c : columns()) header.push_back(c);
  cells.push_back(header);
  for (const auto& r : best) {
    cells.push_back({r.config, r.display_name, fmt::format("{:.4f}", r.precision),
                     fmt::format("{:.4f}", r.recall), fmt::format("{:.4f}", r.f1),
                     fmt::format("{:.4f}", r.map), fmt::format("{:.4f}", r.mrr),
                     std::to_string(r.k)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      if (c) out += "  ";
      out += c < 2 ? fmt::format("{:<{}}", cells[i][c], width[c])
                   : fmt::format("{:>{}}", cells[i][c], width[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run files

std::string format_score(double value) { return fmt::format("{}", value); }

void write_run(std::ostream& out, const RankedList& list, std::string_view method) {
  for (const auto& e : list.entries) {
    out << list.query_id << ' ' << e.doc_id << ' ' << e.rank << ' ' << format_score(e.score)
        << ' ' << method << '\n';
  }
}

std::map<std::string, std::vector<RankedList>> read_run(std::istream& in) {
  std::map<std::string, std::vector<RankedList>> out;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string qid, doc, method, extra;
    std::size_t rank = 0;
    double score = 0;
    if (!(fields >> qid)) continue;
    if (!(fields >> doc >> rank >> score >> method) || (fields >> extra)) {
      throw ValidationError("run line " + std::to_string(line_no) +
                            ": expected 'query_id doc_id rank score method'");
    }
    auto& lists = out[method];
    auto [it, inserted] = slot.try_emplace({method, qid}, lists.size());
    if (inserted) lists.push_back({qid, ListSource::kRerank, {}});
    lists[it->second].entries.push_back({doc, rank, score});
  }
  for (auto& [method, lists] : out) {
    for (auto& l : lists) l.validate();
  }
  return out;
}

}  // namespace pcr
