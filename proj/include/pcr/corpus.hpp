#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pcr {

struct Bm25Config;

/// Sentence-level functional label in a judgment.
enum class RhetoricalRole : std::uint8_t { kFacts, kIssue, kArgument, kReasoning, kDecision, kOther };

inline constexpr std::array<RhetoricalRole, 6> kAllRoles = {
    RhetoricalRole::kFacts,    RhetoricalRole::kIssue,    RhetoricalRole::kArgument,
    RhetoricalRole::kReasoning, RhetoricalRole::kDecision, RhetoricalRole::kOther};

std::string_view to_string(RhetoricalRole role) noexcept;

/// Accepts the canonical names plus plural/lowercase aliases
/// ("Issues", "Arguments", "facts", "Ruling" ...). Throws ValidationError.
RhetoricalRole parse_role(std::string_view name);

struct AnnotatedSentence {
  std::size_t index = 0;
  std::string text;
  RhetoricalRole role = RhetoricalRole::kOther;

  bool operator==(const AnnotatedSentence&) const = default;
};

struct Document {
  std::string doc_id;
  std::string raw_text;
  std::vector<AnnotatedSentence> sentences;
  std::set<std::string> cited_doc_ids;

  bool is_query() const noexcept { return !cited_doc_ids.empty(); }
  bool annotated() const noexcept { return !sentences.empty(); }

  bool operator==(const Document&) const = default;
};

/// Immutable collection of documents with unique ids, kept in load order.
class Corpus {
 public:
  Corpus() = default;
  /// Throws ValidationError naming the first duplicate id.
  explicit Corpus(std::vector<Document> documents);

  std::size_t size() const noexcept { return documents_.size(); }
  bool empty() const noexcept { return documents_.empty(); }
  std::span<const Document> documents() const noexcept { return documents_; }

  const Document* find(std::string_view doc_id) const;
  const Document& at(std::string_view doc_id) const;
  bool contains(std::string_view doc_id) const { return find(doc_id) != nullptr; }

  /// Ids of documents with at least one citation, ascending.
  std::vector<std::string> query_ids() const;

  /// SHA-256 over the canonical serialization.
  std::string content_hash() const;

  bool operator==(const Corpus& other) const { return documents_ == other.documents_; }

 private:
  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct LoadReport {
  std::vector<std::string> warnings;
  /// (citing doc, cited id) pairs whose target is not in the corpus.
  std::vector<std::pair<std::string, std::string>> unknown_citations;
  std::vector<std::string> emptied_documents;
};

struct LoadedCorpus {
  Corpus corpus;
  LoadReport report;
};

/// Reads the one-object-per-line corpus format. Errors carry the 1-based line.
LoadedCorpus read_corpus(std::istream& in);
LoadedCorpus load_corpus(const std::filesystem::path& path);

void write_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Replaces case-citation spans with the literal token "<CITATION>".
class CitationMasker {
 public:
  static constexpr std::string_view kToken = "<CITATION>";

  /// Existing tokens, anchor-tagged hyperlinks, and "X v. Y" case names.
  static const std::string& default_pattern();

  CitationMasker();
  explicit CitationMasker(std::string pattern);

  std::string mask(std::string_view text) const;
  bool contains_citation(std::string_view text) const;
  const std::string& pattern() const noexcept { return pattern_; }

 private:
  std::string pattern_;
  std::regex regex_;
};

std::string mask_citations(std::string_view text);

/// Copy of `document` without sentences that cite. Throws ValidationError for
/// unsegmented documents. raw_text is rebuilt from the retained sentences.
Document drop_citation_sentences(const Document& document,
                                 const CitationMasker& masker = CitationMasker());

using TextTransform = std::function<std::string(std::string_view)>;

struct PreprocessOptions {
  bool mask_citations = true;
  bool drop_citation_sentences = false;
  std::string citation_pattern = CitationMasker::default_pattern();
  /// Entity normalization hook; identity when empty.
  TextTransform entity_normalizer;
};

Corpus preprocess_corpus(const Corpus& corpus, const PreprocessOptions& options,
                         LoadReport& report);

struct CorpusStats {
  std::size_t n_documents = 0;
  double avg_document_size = 0.0;
  std::size_t n_query_documents = 0;
  std::size_t total_citation_links = 0;
  double avg_citations_per_query = 0.0;
  std::size_t vocabulary_size = 0;
};

/// Document size is counted in code points; vocabulary uses the lexical tokenizer.
CorpusStats corpus_stats(const Corpus& corpus);
CorpusStats corpus_stats(const Corpus& corpus, const Bm25Config& tokenizer);

struct SplitSpec {
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct QuerySplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Deterministic per seed. Validation and test sizes are the rounded
/// fractions of the query count; train takes the remainder.
QuerySplit split_queries(const Corpus& corpus, const SplitSpec& spec);

/// `query_id 0 doc_id 1` for every citation link, sorted.
void write_qrels(const Corpus& corpus, std::ostream& out);

}  // namespace pcr
