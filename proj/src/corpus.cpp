#include "pcr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "pcr/error.hpp"
#include "pcr/segmenter.hpp"
#include "pcr/lexical.hpp"
#include "pcr/text.hpp"

namespace pcr {

using nlohmann::ordered_json;

std::string_view to_string(RhetoricalRole role) noexcept {
  switch (role) {
    case RhetoricalRole::kFacts: return "Facts";
    case RhetoricalRole::kIssue: return "Issue";
    case RhetoricalRole::kArgument: return "Argument";
    case RhetoricalRole::kReasoning: return "Reasoning";
    case RhetoricalRole::kDecision: return "Decision";
    case RhetoricalRole::kOther: return "Other";
  }
  return "Other";
}

RhetoricalRole parse_role(std::string_view name) {
  const std::string key = text::ascii_lower(text::normalize_whitespace(name));
  if (key == "facts" || key == "fact") return RhetoricalRole::kFacts;
  if (key == "issue" || key == "issues") return RhetoricalRole::kIssue;
  if (key == "argument" || key == "arguments") return RhetoricalRole::kArgument;
  if (key == "reasoning" || key == "ratio" || key == "ratio of the decision")
    return RhetoricalRole::kReasoning;
  if (key == "decision" || key == "ruling" || key == "ruling by present court")
    return RhetoricalRole::kDecision;
  if (key == "other" || key == "none") return RhetoricalRole::kOther;
  throw ValidationError("unknown rhetorical role '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  by_id_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    if (!by_id_.emplace(documents_[i].doc_id, i).second) {
      throw ValidationError("duplicate doc_id '" + documents_[i].doc_id + "'");
    }
  }
}

const Document* Corpus::find(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

const Document& Corpus::at(std::string_view doc_id) const {
  const Document* doc = find(doc_id);
  if (!doc) throw ValidationError("unknown doc_id '" + std::string(doc_id) + "'");
  return *doc;
}

std::vector<std::string> Corpus::query_ids() const {
  std::vector<std::string> ids;
  for (const auto& d : documents_) {
    if (d.is_query()) ids.push_back(d.doc_id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string Corpus::content_hash() const {
  std::ostringstream out;
  write_corpus(*this, out);
  return text::sha256_hex(out.str());
}

// ---------------------------------------------------------------------------
// File format

namespace {

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
  throw ValidationError("corpus line " + std::to_string(line) + ": " + why);
}

Document parse_record(const std::string& raw, std::size_t line) {
  ordered_json j;
  try {
    j = ordered_json::parse(raw);
  } catch (const ordered_json::parse_error& e) {
    malformed(line, std::string("invalid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) malformed(line, "record is not an object");
  if (!j.contains("doc_id") || !j["doc_id"].is_string()) malformed(line, "missing string 'doc_id'");
  if (!j.contains("text") || !j["text"].is_string()) malformed(line, "missing string 'text'");

  Document doc;
  doc.doc_id = j["doc_id"].get<std::string>();
  doc.raw_text = j["text"].get<std::string>();
  if (doc.doc_id.empty()) malformed(line, "empty 'doc_id'");
  // Run and qrels files are whitespace-separated.
  auto has_space = [](const std::string& s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
  };
  if (has_space(doc.doc_id)) malformed(line, "'doc_id' contains whitespace");

  if (j.contains("sentences")) {
    const auto& sents = j["sentences"];
    if (!sents.is_array()) malformed(line, "'sentences' is not an array");
    for (const auto& s : sents) {
      if (!s.is_object() || !s.contains("text") || !s["text"].is_string() ||
          !s.contains("role") || !s["role"].is_string()) {
        malformed(line, "sentence needs string 'text' and 'role'");
      }
      AnnotatedSentence sentence;
      sentence.index = doc.sentences.size();
      sentence.text = s["text"].get<std::string>();
      if (text::normalize_whitespace(sentence.text).empty()) malformed(line, "empty sentence text");
      try {
        sentence.role = parse_role(s["role"].get<std::string>());
      } catch (const ValidationError& e) {
        malformed(line, e.what());
      }
      doc.sentences.push_back(std::move(sentence));
    }
  }
  if (j.contains("citations")) {
    const auto& cites = j["citations"];
    if (!cites.is_array()) malformed(line, "'citations' is not an array");
    for (const auto& c : cites) {
      if (!c.is_string()) malformed(line, "citation ids must be strings");
      if (has_space(c.get<std::string>())) malformed(line, "citation id contains whitespace");
      doc.cited_doc_ids.insert(c.get<std::string>());
    }
  }
  return doc;
}

}  // namespace

LoadedCorpus read_corpus(std::istream& in) {
  LoadReport report;
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::normalize_whitespace(raw).empty()) continue;
    Document doc = parse_record(raw, line);
    if (!ids.insert(doc.doc_id).second) {
      throw ValidationError("corpus line " + std::to_string(line) + ": duplicate doc_id '" +
                            doc.doc_id + "'");
    }
    if (doc.cited_doc_ids.erase(doc.doc_id) > 0) {
      report.warnings.push_back("document '" + doc.doc_id + "' cites itself; link dropped");
    }
    if (doc.annotated()) {
      std::vector<std::string> parts;
      for (const auto& s : doc.sentences) parts.push_back(s.text);
      if (text::normalize_whitespace(text::join(parts)) != text::normalize_whitespace(doc.raw_text)) {
        report.warnings.push_back("document '" + doc.doc_id +
                                  "': sentences do not reconstruct text");
      }
    }
    docs.push_back(std::move(doc));
  }
  for (const auto& d : docs) {
    for (const auto& cited : d.cited_doc_ids) {
      if (!ids.count(cited)) report.unknown_citations.emplace_back(d.doc_id, cited);
    }
  }
  if (!report.unknown_citations.empty()) {
    report.warnings.push_back(std::to_string(report.unknown_citations.size()) +
                              " citation(s) reference documents outside the corpus");
  }
  return {Corpus(std::move(docs)), std::move(report)};
}

LoadedCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file '" + path.string() + "'");
  return read_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& d : corpus.documents()) {
    ordered_json j;
    j["doc_id"] = d.doc_id;
    j["text"] = d.raw_text;
    if (d.annotated()) {
      ordered_json sents = ordered_json::array();
      for (const auto& s : d.sentences) {
        sents.push_back({{"text", s.text}, {"role", std::string(to_string(s.role))}});
      }
      j["sentences"] = std::move(sents);
    }
    if (!d.cited_doc_ids.empty()) {
      j["citations"] = std::vector<std::string>(d.cited_doc_ids.begin(), d.cited_doc_ids.end());
    }
    out << j.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw StageError("corpus", "cannot write '" + path.string() + "'");
  write_corpus(corpus, out);
}

// ---------------------------------------------------------------------------
// Citation masking

const std::string& CitationMasker::default_pattern() {
  // Party names are runs of capitalised words, optionally joined by "of",
  // "and" or "for". Capitalised sentence openers never start a party name.
  // Anchor bodies may not contain tags.
  static const std::string kPattern =
      R"(<CITATION>)"
      R"(|<[aA]\b[^>]{0,2000}>[^<]{0,1000}</[aA]>)"
      R"(|\b(?!(?:In|As|See|Cf|Per|By|On|Of|At|To|For|From|Under|Following|Also|And|But|Or|Like|Unlike|Vide|Where|When|Since|While|Thus|Hence|Then|The|This|That|These|Those|It|We|He|She|They|Held|Relied|Relying)\b))"
      R"([A-Z][A-Za-z0-9&'-]*(?:\s+(?:(?:of|and|for)\s+)?[A-Z][A-Za-z0-9&'-]*){0,4})"
      R"(\s+vs?\.\s+)"
      R"([A-Z][A-Za-z0-9&'-]*(?:\s+(?:(?:of|and|for)\s+)?[A-Z][A-Za-z0-9&'-]*){0,3})";
  return kPattern;
}

CitationMasker::CitationMasker() : CitationMasker(default_pattern()) {}

CitationMasker::CitationMasker(std::string pattern) : pattern_(std::move(pattern)) {
  try {
    regex_ = std::regex(pattern_, std::regex::ECMAScript | std::regex::optimize);
  } catch (const std::regex_error& e) {
    throw ValidationError("invalid citation pattern: " + std::string(e.what()));
  }
}

std::string CitationMasker::mask(std::string_view text) const {
  return std::regex_replace(std::string(text), regex_, std::string(kToken));
}

bool CitationMasker::contains_citation(std::string_view text) const {
  return std::regex_search(text.begin(), text.end(), regex_);
}

std::string mask_citations(std::string_view text) {
  static const CitationMasker masker;
  return masker.mask(text);
}

Document drop_citation_sentences(const Document& document, const CitationMasker& masker) {
  if (!document.annotated()) {
    throw ValidationError("document '" + document.doc_id + "' has no sentence segmentation");
  }
  Document out = document;
  out.sentences.clear();
  std::vector<std::string> kept;
  for (const auto& s : document.sentences) {
    if (s.text.find(CitationMasker::kToken) != std::string::npos ||
        masker.contains_citation(s.text)) {
      continue;
    }
    AnnotatedSentence copy = s;
    copy.index = out.sentences.size();
    kept.push_back(copy.text);
    out.sentences.push_back(std::move(copy));
  }
  out.raw_text = text::join(kept);
  return out;
}

Corpus preprocess_corpus(const Corpus& corpus, const PreprocessOptions& options,
                         LoadReport& report) {
  const CitationMasker masker(options.citation_pattern);
  auto transform = [&](std::string_view s) {
    std::string out = options.entity_normalizer ? options.entity_normalizer(s) : std::string(s);
    return options.mask_citations ? masker.mask(out) : out;
  };

  std::vector<Document> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus.documents()) {
    Document doc = d;
    if (options.drop_citation_sentences) {
      // Drop first so spans are still recognisable before masking rewrites them.
      if (doc.annotated()) {
        doc = drop_citation_sentences(doc, masker);
      } else {
        // Unannotated text is split by the rule-based segmenter and stays unannotated.
        std::vector<std::string> kept;
        for (auto& s : sentence_texts(doc.raw_text, segment_sentences(doc.raw_text))) {
          if (s.find(CitationMasker::kToken) == std::string::npos && !masker.contains_citation(s)) {
            kept.push_back(std::move(s));
          }
        }
        doc.raw_text = text::join(kept);
      }
      if (!text::normalize_whitespace(d.raw_text).empty() &&
          text::normalize_whitespace(doc.raw_text).empty()) {
        report.emptied_documents.push_back(doc.doc_id);
        report.warnings.push_back("document '" + doc.doc_id + "': every sentence cites");
      }
    }
    doc.raw_text = transform(doc.raw_text);
    for (auto& s : doc.sentences) s.text = transform(s.text);
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs));
}

// ---------------------------------------------------------------------------
// Statistics, splits, qrels

CorpusStats corpus_stats(const Corpus& corpus) { return corpus_stats(corpus, Bm25Config{}); }

CorpusStats corpus_stats(const Corpus& corpus, const Bm25Config& tokenizer) {
  CorpusStats stats;
  stats.n_documents = corpus.size();
  std::size_t total_chars = 0;
  std::unordered_set<std::string> vocabulary;
  for (const auto& d : corpus.documents()) {
    total_chars += text::char_count(d.raw_text);
    if (d.is_query()) {
      ++stats.n_query_documents;
      stats.total_citation_links += d.cited_doc_ids.size();
    }
    for (auto& tok : tokenize(d.raw_text, tokenizer)) vocabulary.insert(std::move(tok));
  }
  if (stats.n_documents > 0) {
    stats.avg_document_size =
        static_cast<double>(total_chars) / static_cast<double>(stats.n_documents);
  }
  if (stats.n_query_documents > 0) {
    stats.avg_citations_per_query = static_cast<double>(stats.total_citation_links) /
                                    static_cast<double>(stats.n_query_documents);
  }
  stats.vocabulary_size = vocabulary.size();
  return stats;
}

QuerySplit split_queries(const Corpus& corpus, const SplitSpec& spec) {
  const double fractions[] = {spec.train_fraction, spec.validation_fraction, spec.test_fraction};
  for (double f : fractions) {
    if (!std::isfinite(f) || f < 0.0) throw ValidationError("split fractions must be non-negative");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }

  std::vector<std::string> ids = corpus.query_ids();
  const std::size_t n = ids.size();
  std::mt19937_64 rng(spec.seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  auto rounded = [n](double f) {
    return static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  };
  std::size_t n_test = std::min(rounded(spec.test_fraction), n);
  std::size_t n_val = std::min(rounded(spec.validation_fraction), n - n_test);
  std::size_t n_train = n - n_val - n_test;

  QuerySplit split;
  auto first = ids.begin();
  split.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  first += static_cast<std::ptrdiff_t>(n_train);
  split.validation.assign(first, first + static_cast<std::ptrdiff_t>(n_val));
  first += static_cast<std::ptrdiff_t>(n_val);
  split.test.assign(first, ids.end());
  for (auto* part : {&split.train, &split.validation, &split.test}) {
    std::sort(part->begin(), part->end());
  }
  return split;
}

void write_qrels(const Corpus& corpus, std::ostream& out) {
  for (const auto& qid : corpus.query_ids()) {
    for (const auto& cited : corpus.at(qid).cited_doc_ids) {
      out << qid << " 0 " << cited << " 1\n";
    }
  }
}

}  // namespace pcr
