#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcr/corpus.hpp"

namespace pcr {

class SidecarClient;

/// Byte range [begin, end) of one sentence in the source text.
struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const SentenceSpan&) const = default;
};

/// Lowercased tokens (including the trailing period) that never end a sentence.
const std::set<std::string>& default_abbreviations();

/// Rule-based splitter. A sentence ends at a run of . ? ! (plus any closing
/// quotes or brackets) followed by whitespace or end of text, unless the word
/// ending in '.' is a known abbreviation or a single-letter initial. Trailing
/// text without a terminator forms the last sentence.
std::vector<SentenceSpan> segment_sentences(std::string_view text);
std::vector<SentenceSpan> segment_sentences(std::string_view text,
                                            const std::set<std::string>& abbreviations);

std::vector<std::string> sentence_texts(std::string_view text,
                                        const std::vector<SentenceSpan>& spans);

enum class AnnotatorStrategy { kFile, kHeuristic, kExternal };

std::string_view to_string(AnnotatorStrategy strategy) noexcept;
AnnotatorStrategy parse_annotator_strategy(std::string_view name);

/// Ordered cue-phrase rules: the first rule whose phrase occurs in a sentence
/// (case-insensitive) decides its role.
class CueTable {
 public:
  struct Rule {
    RhetoricalRole role;
    std::string phrase;  // lowercased
  };

  /// The shipped table (see data/cues.tsv).
  static const CueTable& builtin();
  /// `ROLE<TAB>phrase` per line; blank lines and lines starting with '#' skipped.
  static CueTable parse(std::istream& in);
  static CueTable load(const std::filesystem::path& path);

  explicit CueTable(std::vector<Rule> rules) : rules_(std::move(rules)) {}

  const std::vector<Rule>& rules() const noexcept { return rules_; }
  /// Role of the first matching rule, if any.
  std::optional<RhetoricalRole> match(std::string_view sentence) const;

 private:
  std::vector<Rule> rules_;
};

/// Assigns one role per sentence of a document.
class RoleAnnotator {
 public:
  virtual ~RoleAnnotator() = default;
  virtual AnnotatorStrategy strategy() const noexcept = 0;
  virtual std::vector<AnnotatedSentence> annotate(const Document& document) const = 0;
};

/// Passes through annotations loaded with the corpus.
class FileAnnotator final : public RoleAnnotator {
 public:
  AnnotatorStrategy strategy() const noexcept override { return AnnotatorStrategy::kFile; }
  /// Throws ValidationError naming the document when it has text but no annotations.
  std::vector<AnnotatedSentence> annotate(const Document& document) const override;
};

/// Cue-phrase classifier with a positional prior for unmatched sentences:
/// the first tenth of a document (at least one sentence) defaults to Facts,
/// the last tenth to Decision, the rest to Other.
class HeuristicAnnotator final : public RoleAnnotator {
 public:
  explicit HeuristicAnnotator(CueTable cues = CueTable::builtin()) : cues_(std::move(cues)) {}

  AnnotatorStrategy strategy() const noexcept override { return AnnotatorStrategy::kHeuristic; }
  std::vector<AnnotatedSentence> annotate(const Document& document) const override;

  RhetoricalRole classify(std::string_view sentence, std::size_t position,
                          std::size_t count) const;
  std::vector<RhetoricalRole> classify_all(const std::vector<std::string>& sentences) const;

 private:
  CueTable cues_;
};

/// Delegates labelling to the sidecar's `annotate` request, one batch per document.
class ExternalAnnotator final : public RoleAnnotator {
 public:
  explicit ExternalAnnotator(std::shared_ptr<SidecarClient> client) : client_(std::move(client)) {}

  AnnotatorStrategy strategy() const noexcept override { return AnnotatorStrategy::kExternal; }
  std::vector<AnnotatedSentence> annotate(const Document& document) const override;

 private:
  std::shared_ptr<SidecarClient> client_;
};

/// Re-annotates every document with `annotator`; raw_text is preserved.
Corpus annotate_corpus(const Corpus& corpus, const RoleAnnotator& annotator);

/// Named set of roles used to filter a query document.
struct RoleConfig {
  std::string name;
  std::set<RhetoricalRole> included_roles;

  /// Presets: full, facts, facts_issue, facts_issue_arguments,
  /// facts_issue_reasoning, facts_issue_decision. Anything else may be given as
  /// "custom:Facts,Reasoning". Throws ValidationError.
  static RoleConfig preset(std::string_view name);
  static const std::vector<std::string>& preset_names();

  bool is_full() const noexcept { return included_roles.size() == kAllRoles.size(); }
  bool includes(RhetoricalRole role) const { return included_roles.count(role) > 0; }
};

struct RoleQuery {
  std::string query_id;
  std::string config_name;
  std::string text;
  std::vector<std::size_t> sentence_indices;
  bool empty = false;
};

/// Sentences whose role is in the config, in index order, joined by one
/// space. Throws ValidationError for unannotated documents.
RoleQuery build_role_query(const Document& document, const RoleConfig& config);

}  // namespace pcr
