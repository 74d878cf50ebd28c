#include "pcr/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcr/corpus.hpp"
#include "pcr/error.hpp"
#include "pcr/text.hpp"

namespace pcr {

namespace {

constexpr std::string_view kIndexMagic = "pcr-lexical-index";
constexpr int kIndexVersion = 1;

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

double term_weight(double idf, double tf, double dl, double avgdl, const Bm25Config& config) {
  const double norm = avgdl > 0.0 ? dl / avgdl : 0.0;
  return idf * tf * (config.k1 + 1.0) / (tf + config.k1 * (1.0 - config.b + config.b * norm));
}

/// Distinct query tokens in ascending order; fixes the summation order so
/// per-document and accumulated scores are bit-identical.
std::vector<std::string> distinct_tokens(std::span<const std::string> query) {
  std::vector<std::string> out(query.begin(), query.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::string Bm25Config::stopword_hash() const {
  std::string joined;
  for (const auto& w : stopwords) {
    joined += w;
    joined += '\n';
  }
  return text::sha256_hex(joined);
}

void Bm25Config::validate() const {
  if (!(k1 >= 0.0) || !std::isfinite(k1)) throw ValidationError("bm25 k1 must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw ValidationError("bm25 b must lie in [0, 1]");
}

std::vector<std::string> tokenize(std::string_view text, const Bm25Config& config) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) {
      std::string tok(text.substr(start, i - start));
      if (config.lowercase) tok = text::ascii_lower(tok);
      if (!config.stopwords.count(tok)) tokens.push_back(std::move(tok));
    }
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// InvertedIndex

InvertedIndex InvertedIndex::build(std::vector<Source> documents, const Bm25Config& config) {
  config.validate();
  std::sort(documents.begin(), documents.end(),
            [](const Source& a, const Source& b) { return a.doc_id < b.doc_id; });

  InvertedIndex index;
  index.config_ = config;
  index.doc_ids_.reserve(documents.size());
  index.doc_lengths_.reserve(documents.size());
  std::uint64_t total_length = 0;

  for (std::uint32_t ord = 0; ord < documents.size(); ++ord) {
    const auto& doc = documents[ord];
    if (!index.ordinals_.emplace(doc.doc_id, ord).second) {
      throw ValidationError("duplicate doc_id '" + doc.doc_id + "' in index build");
    }
    index.doc_ids_.push_back(doc.doc_id);

    std::map<std::string, std::uint32_t> counts;
    std::uint32_t length = 0;
    for (auto& tok : tokenize(doc.text, config)) {
      ++counts[std::move(tok)];
      ++length;
    }
    index.doc_lengths_.push_back(length);
    total_length += length;
    // Ordinals increase monotonically, so postings stay sorted by doc id.
    for (auto& [tok, tf] : counts) index.postings_[tok].push_back({ord, tf});
  }
  if (!documents.empty()) {
    index.avg_doc_length_ =
        static_cast<double>(total_length) / static_cast<double>(documents.size());
  }
  return index;
}

std::optional<std::uint32_t> InvertedIndex::ordinal(std::string_view doc_id) const {
  auto it = ordinals_.find(std::string(doc_id));
  if (it == ordinals_.end()) return std::nullopt;
  return it->second;
}

std::span<const Posting> InvertedIndex::postings(std::string_view token) const {
  auto it = postings_.find(std::string(token));
  if (it == postings_.end()) return {};
  return it->second;
}

std::vector<std::string> InvertedIndex::tokens() const {
  std::vector<std::string> out;
  out.reserve(postings_.size());
  for (const auto& [tok, _] : postings_) out.push_back(tok);
  std::sort(out.begin(), out.end());
  return out;
}

void InvertedIndex::save(std::ostream& out) const {
  out << kIndexMagic << ' ' << kIndexVersion << '\n';
  out << std::setprecision(17) << "k1 " << config_.k1 << " b " << config_.b << " lowercase "
      << (config_.lowercase ? 1 : 0) << " stopwords " << config_.stopword_hash() << '\n';
  out << "docs " << doc_ids_.size() << '\n';
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    out << nlohmann::json(doc_ids_[i]).dump() << '\t' << doc_lengths_[i] << '\n';
  }
  const auto toks = tokens();
  out << "terms " << toks.size() << '\n';
  for (const auto& tok : toks) {
    const auto& plist = postings_.at(tok);
    out << tok << '\t' << plist.size();
    for (const auto& p : plist) out << ' ' << p.doc << ':' << p.tf;
    out << '\n';
  }
}

InvertedIndex InvertedIndex::load(std::istream& in, const Bm25Config& expected) {
  auto fail = [](const std::string& why) -> InvertedIndex {
    throw ValidationError("lexical index: " + why);
  };
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kIndexMagic) return fail("bad header");
  if (version != kIndexVersion) return fail("unsupported version " + std::to_string(version));

  std::string key_k1, key_b, key_lc, key_sw, sw_hash;
  double k1 = 0, b = 0;
  int lowercase = 0;
  in >> key_k1 >> k1 >> key_b >> b >> key_lc >> lowercase >> key_sw >> sw_hash;
  if (!in || key_k1 != "k1" || key_b != "b" || key_lc != "lowercase" || key_sw != "stopwords") {
    return fail("bad config line");
  }
  if (k1 != expected.k1 || b != expected.b || (lowercase != 0) != expected.lowercase ||
      sw_hash != expected.stopword_hash()) {
    return fail("stale index: built with a different bm25/tokenizer config");
  }

  InvertedIndex index;
  index.config_ = expected;
  std::string word;
  std::size_t n_docs = 0;
  if (!(in >> word >> n_docs) || word != "docs") return fail("missing docs section");
  in.ignore(1);
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < n_docs; ++i) {
    std::string line;
    if (!std::getline(in, line)) return fail("truncated docs section");
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) return fail("bad doc line");
    auto id = nlohmann::json::parse(line.substr(0, tab)).get<std::string>();
    auto len = static_cast<std::uint32_t>(std::stoul(line.substr(tab + 1)));
    index.ordinals_.emplace(id, i);
    index.doc_ids_.push_back(std::move(id));
    index.doc_lengths_.push_back(len);
    total += len;
  }
  if (n_docs > 0) index.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(n_docs);

  std::size_t n_terms = 0;
  if (!(in >> word >> n_terms) || word != "terms") return fail("missing terms section");
  for (std::size_t t = 0; t < n_terms; ++t) {
    std::string tok;
    std::size_t count = 0;
    if (!(in >> tok >> count)) return fail("truncated terms section");
    auto& plist = index.postings_[tok];
    plist.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      std::uint32_t doc = 0, tf = 0;
      char colon = 0;
      if (!(in >> doc >> colon >> tf) || colon != ':' || doc >= n_docs) {
        return fail("bad posting for '" + tok + "'");
      }
      plist.push_back({doc, tf});
    }
  }
  return index;
}

InvertedIndex build_index(const Corpus& corpus, const Bm25Config& config) {
  std::vector<InvertedIndex::Source> sources;
  sources.reserve(corpus.size());
  for (const auto& d : corpus.documents()) sources.push_back({d.doc_id, d.raw_text});
  return InvertedIndex::build(std::move(sources), config);
}

// ---------------------------------------------------------------------------
// Scoring

double bm25_idf(std::size_t n_docs, std::size_t df) {
  const double n = static_cast<double>(n_docs);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_score(std::span<const std::string> query, std::string_view doc_id,
                  const InvertedIndex& index, const Bm25Config& config) {
  const auto ord = index.ordinal(doc_id);
  if (!ord) throw ValidationError("bm25: unknown doc_id '" + std::string(doc_id) + "'");
  const double dl = index.doc_length(*ord);
  double score = 0.0;
  for (const auto& tok : distinct_tokens(query)) {
    const auto plist = index.postings(tok);
    auto it = std::lower_bound(plist.begin(), plist.end(), *ord,
                               [](const Posting& p, std::uint32_t o) { return p.doc < o; });
    if (it == plist.end() || it->doc != *ord) continue;
    score += term_weight(bm25_idf(index.n_docs(), plist.size()), it->tf, dl,
                         index.avg_doc_length(), config);
  }
  return score;
}

namespace {

/// Accumulates scores for documents flagged in `include` (all when empty).
std::vector<double> accumulate_scores(std::span<const std::string> query,
                                      const InvertedIndex& index, const Bm25Config& config,
                                      const std::vector<char>& include) {
  std::vector<double> scores(index.n_docs(), 0.0);
  for (const auto& tok : distinct_tokens(query)) {
    const auto plist = index.postings(tok);
    if (plist.empty()) continue;
    const double idf = bm25_idf(index.n_docs(), plist.size());
    for (const auto& p : plist) {
      if (!include.empty() && !include[p.doc]) continue;
      scores[p.doc] +=
          term_weight(idf, p.tf, index.doc_length(p.doc), index.avg_doc_length(), config);
    }
  }
  return scores;
}

}  // namespace

RankedList score_candidates(std::string query_id, std::span<const std::string> query,
                            std::span<const std::string> candidates, const InvertedIndex& index,
                            const Bm25Config& config) {
  std::vector<char> include(index.n_docs(), 0);
  std::vector<std::uint32_t> ords;
  ords.reserve(candidates.size());
  for (const auto& id : candidates) {
    const auto ord = index.ordinal(id);
    if (!ord) throw ValidationError("bm25: candidate '" + id + "' is not indexed");
    if (!include[*ord]) ords.push_back(*ord);
    include[*ord] = 1;
  }
  const auto scores = accumulate_scores(query, index, config, include);
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(ords.size());
  for (auto ord : ords) scored.emplace_back(index.doc_id(ord), scores[ord]);
  return RankedList::from_scores(std::move(query_id), ListSource::kBm25, std::move(scored));
}

RankedList search_bm25(std::string query_id, std::span<const std::string> query,
                       const InvertedIndex& index, const Bm25Config& config, std::size_t top_k) {
  const auto scores = accumulate_scores(query, index, config, {});
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(scores.size());
  for (std::uint32_t ord = 0; ord < scores.size(); ++ord) {
    scored.emplace_back(index.doc_id(ord), scores[ord]);
  }
  auto list = RankedList::from_scores(std::move(query_id), ListSource::kBm25, std::move(scored));
  list.truncate(top_k);
  return list;
}

}  // namespace pcr
