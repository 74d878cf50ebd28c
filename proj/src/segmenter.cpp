#include "pcr/segmenter.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "pcr/cues_builtin.hpp"
#include "pcr/error.hpp"
#include "pcr/sidecar.hpp"
#include "pcr/text.hpp"

namespace pcr {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_terminator(char c) { return c == '.' || c == '?' || c == '!'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

bool is_abbreviation(std::string_view text, std::size_t period,
                     const std::set<std::string>& abbreviations) {
  std::size_t start = period;
  while (start > 0 && !is_space(text[start - 1])) --start;
  std::string_view word = text.substr(start, period - start + 1);
  while (!word.empty() && (word.front() == '(' || word.front() == '[' || word.front() == '"' ||
                           word.front() == '\'')) {
    word.remove_prefix(1);
  }
  if (word.size() == 2 && std::isalpha(static_cast<unsigned char>(word[0]))) return true;
  return abbreviations.count(text::ascii_lower(word)) > 0;
}

}  // namespace

const std::set<std::string>& default_abbreviations() {
  static const std::set<std::string> kAbbrev = {
      "s.",    "ss.",   "no.",   "nos.",  "v.",     "vs.",    "mr.",  "mrs.",  "ms.",
      "dr.",   "hon.",  "j.",    "jj.",   "cj.",    "art.",   "arts.", "sec.", "secs.",
      "cl.",   "r.",    "rr.",   "o.",    "p.",     "pp.",    "para.", "paras.", "vol.",
      "ltd.",  "pvt.",  "co.",   "corp.", "inc.",   "govt.",  "dept.", "i.e.", "e.g.",
      "viz.",  "cf.",   "ibid.", "cr.",   "crl.",   "cri.",   "cr.p.c.", "c.p.c.",
      "i.p.c.", "a.i.r.", "s.c.r.", "anr.", "ors."};
  return kAbbrev;
}

std::vector<SentenceSpan> segment_sentences(std::string_view text) {
  return segment_sentences(text, default_abbreviations());
}

std::vector<SentenceSpan> segment_sentences(std::string_view text,
                                            const std::set<std::string>& abbreviations) {
  std::vector<SentenceSpan> spans;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (true) {
    while (i < n && is_space(text[i])) ++i;
    if (i == n) break;
    const std::size_t begin = i;
    std::size_t end = n;
    std::size_t j = i;
    while (true) {
      while (j < n && !is_terminator(text[j])) ++j;
      if (j == n) {
        end = n;
        while (end > begin && is_space(text[end - 1])) --end;
        break;
      }
      const std::size_t first = j;
      while (j < n && is_terminator(text[j])) ++j;
      const bool single_period = j - first == 1 && text[first] == '.';
      while (j < n && is_closer(text[j])) ++j;
      if (j < n && !is_space(text[j])) continue;
      if (single_period && is_abbreviation(text, first, abbreviations)) continue;
      end = j;
      break;
    }
    spans.push_back({begin, end});
    i = end;
  }
  return spans;
}

std::vector<std::string> sentence_texts(std::string_view text,
                                        const std::vector<SentenceSpan>& spans) {
  std::vector<std::string> out;
  out.reserve(spans.size());
  for (const auto& s : spans) out.emplace_back(text.substr(s.begin, s.end - s.begin));
  return out;
}

std::string_view to_string(AnnotatorStrategy strategy) noexcept {
  switch (strategy) {
    case AnnotatorStrategy::kFile: return "file";
    case AnnotatorStrategy::kHeuristic: return "heuristic";
    case AnnotatorStrategy::kExternal: return "external";
  }
  return "file";
}

AnnotatorStrategy parse_annotator_strategy(std::string_view name) {
  if (name == "file") return AnnotatorStrategy::kFile;
  if (name == "heuristic") return AnnotatorStrategy::kHeuristic;
  if (name == "external") return AnnotatorStrategy::kExternal;
  throw ValidationError("unknown annotator strategy '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Cue table

const CueTable& CueTable::builtin() {
  static const CueTable kTable = [] {
    std::istringstream in(detail::kBuiltinCues);
    return parse(in);
  }();
  return kTable;
}

CueTable CueTable::parse(std::istream& in) {
  std::vector<Rule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::normalize_whitespace(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError("cue table line " + std::to_string(line_no) + ": expected ROLE<TAB>phrase");
    }
    RhetoricalRole role;
    try {
      role = parse_role(line.substr(0, tab));
    } catch (const ValidationError& e) {
      throw ValidationError("cue table line " + std::to_string(line_no) + ": " + e.what());
    }
    std::string phrase = text::ascii_lower(text::normalize_whitespace(line.substr(tab + 1)));
    if (phrase.empty()) {
      throw ValidationError("cue table line " + std::to_string(line_no) + ": empty phrase");
    }
    rules.push_back({role, std::move(phrase)});
  }
  return CueTable(std::move(rules));
}

CueTable CueTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open cue table '" + path.string() + "'");
  return parse(in);
}

std::optional<RhetoricalRole> CueTable::match(std::string_view sentence) const {
  const std::string lowered = text::ascii_lower(text::normalize_whitespace(sentence));
  for (const auto& rule : rules_) {
    if (lowered.find(rule.phrase) != std::string::npos) return rule.role;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Annotators

std::vector<AnnotatedSentence> FileAnnotator::annotate(const Document& document) const {
  if (!document.annotated() && !text::normalize_whitespace(document.raw_text).empty()) {
    throw ValidationError("document '" + document.doc_id + "' has no role annotations");
  }
  return document.sentences;
}

RhetoricalRole HeuristicAnnotator::classify(std::string_view sentence, std::size_t position,
                                            std::size_t count) const {
  if (auto role = cues_.match(sentence)) return *role;
  const std::size_t edge = std::max<std::size_t>(1, (count + 9) / 10);
  if (position < edge) return RhetoricalRole::kFacts;
  if (position + edge >= count) return RhetoricalRole::kDecision;
  return RhetoricalRole::kOther;
}

std::vector<RhetoricalRole> HeuristicAnnotator::classify_all(
    const std::vector<std::string>& sentences) const {
  std::vector<RhetoricalRole> roles;
  roles.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    roles.push_back(classify(sentences[i], i, sentences.size()));
  }
  return roles;
}

namespace {

std::vector<AnnotatedSentence> zip_roles(std::vector<std::string> texts,
                                         const std::vector<RhetoricalRole>& roles) {
  std::vector<AnnotatedSentence> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back({i, std::move(texts[i]), roles[i]});
  }
  return out;
}

}  // namespace

std::vector<AnnotatedSentence> HeuristicAnnotator::annotate(const Document& document) const {
  auto texts = sentence_texts(document.raw_text, segment_sentences(document.raw_text));
  const auto roles = classify_all(texts);
  return zip_roles(std::move(texts), roles);
}

std::vector<AnnotatedSentence> ExternalAnnotator::annotate(const Document& document) const {
  auto texts = sentence_texts(document.raw_text, segment_sentences(document.raw_text));
  if (texts.empty()) return {};
  const auto names = client_->annotate(texts);
  std::vector<RhetoricalRole> roles;
  roles.reserve(names.size());
  for (const auto& name : names) {
    try {
      roles.push_back(parse_role(name));
    } catch (const ValidationError& e) {
      throw TransportError("annotate response for '" + document.doc_id + "': " + e.what());
    }
  }
  return zip_roles(std::move(texts), roles);
}

Corpus annotate_corpus(const Corpus& corpus, const RoleAnnotator& annotator) {
  std::vector<Document> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus.documents()) {
    Document doc = d;
    doc.sentences = annotator.annotate(d);
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs));
}

// ---------------------------------------------------------------------------
// Role queries

const std::vector<std::string>& RoleConfig::preset_names() {
  static const std::vector<std::string> kNames = {
      "full", "facts", "facts_issue", "facts_issue_arguments", "facts_issue_reasoning",
      "facts_issue_decision"};
  return kNames;
}

RoleConfig RoleConfig::preset(std::string_view name) {
  using R = RhetoricalRole;
  if (name == "full") return {"full", {kAllRoles.begin(), kAllRoles.end()}};
  if (name == "facts") return {"facts", {R::kFacts}};
  if (name == "facts_issue") return {"facts_issue", {R::kFacts, R::kIssue}};
  if (name == "facts_issue_arguments")
    return {"facts_issue_arguments", {R::kFacts, R::kIssue, R::kArgument}};
  if (name == "facts_issue_reasoning")
    return {"facts_issue_reasoning", {R::kFacts, R::kIssue, R::kReasoning}};
  if (name == "facts_issue_decision")
    return {"facts_issue_decision", {R::kFacts, R::kIssue, R::kDecision}};

  constexpr std::string_view kCustom = "custom:";
  if (name.substr(0, kCustom.size()) == kCustom) {
    RoleConfig config{std::string(name), {}};
    std::string_view rest = name.substr(kCustom.size());
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      config.included_roles.insert(parse_role(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (config.included_roles.empty()) throw ValidationError("custom role config lists no roles");
    return config;
  }
  throw ValidationError("unknown role preset '" + std::string(name) + "'");
}

RoleQuery build_role_query(const Document& document, const RoleConfig& config) {
  if (!document.annotated() && !text::normalize_whitespace(document.raw_text).empty()) {
    throw ValidationError("document '" + document.doc_id + "' is not role-annotated");
  }
  RoleQuery query{document.doc_id, config.name, {}, {}, false};
  std::vector<std::string> parts;
  for (const auto& s : document.sentences) {
    if (!config.includes(s.role)) continue;
    query.sentence_indices.push_back(s.index);
    parts.push_back(s.text);
  }
  query.text = text::join(parts);
  query.empty = text::normalize_whitespace(query.text).empty();
  return query;
}

}  // namespace pcr
