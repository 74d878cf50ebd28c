#include <doctest.h>

#include <fstream>
#include <sstream>

#include "pcr/error.hpp"
#include "pcr/segmenter.hpp"
#include "support.hpp"

using namespace pcr;
using pcr::testing::annotated;
using pcr::testing::doc;
using R = RhetoricalRole;

namespace {

std::vector<std::string> split(std::string_view s) { return sentence_texts(s, segment_sentences(s)); }

}  // namespace

TEST_CASE("sentence splitting") {
  CHECK(split("The court held it. The appeal fails.") ==
        std::vector<std::string>{"The court held it.", "The appeal fails."});
  // A single capital before a period reads as an initial.
  CHECK(split("Counsel J. Rao argued.").size() == 1);
  CHECK(segment_sentences("").empty());
  CHECK(segment_sentences("   \n ").empty());
  CHECK(split("See s. 302 IPC. He appealed.") ==
        std::vector<std::string>{"See s. 302 IPC.", "He appealed."});
  CHECK(split("Was it proved? No! (It was not.) Done") ==
        std::vector<std::string>{"Was it proved?", "No!", "(It was not.)", "Done"});
  CHECK(split("Mr. A. K. Sen appeared. Version 1.5 applies.") ==
        std::vector<std::string>{"Mr. A. K. Sen appeared.", "Version 1.5 applies."});
  CHECK(split("He said \"stop.\" Then left...  Next") ==
        std::vector<std::string>{"He said \"stop.\"", "Then left...", "Next"});
}

TEST_CASE("custom abbreviation list") {
  const std::set<std::string> none;
  CHECK(segment_sentences("See s. 302 IPC. He appealed.", none).size() == 2);
  CHECK(segment_sentences("Under sec. 5 the rule holds.", none).size() == 2);
  CHECK(segment_sentences("Under sec. 5 the rule holds.").size() == 1);
}

TEST_CASE("shipped cue file matches the compiled-in table") {
  const auto from_file = CueTable::load(PCR_CUES_TSV);
  const auto& builtin = CueTable::builtin();
  REQUIRE(from_file.rules().size() == builtin.rules().size());
  for (std::size_t i = 0; i < builtin.rules().size(); ++i) {
    CHECK(from_file.rules()[i].role == builtin.rules()[i].role);
    CHECK(from_file.rules()[i].phrase == builtin.rules()[i].phrase);
  }
}

TEST_CASE("cue table parsing") {
  std::istringstream in("# comment\n\nFacts\tWas Convicted\nIssues\tis whether\r\n");
  auto t = CueTable::parse(in);
  REQUIRE(t.rules().size() == 2);
  CHECK(t.rules()[0].phrase == "was convicted");
  CHECK(t.rules()[1].role == R::kIssue);
  CHECK(t.match("The accused WAS CONVICTED.") == R::kFacts);
  CHECK_FALSE(t.match("Nothing here").has_value());

  std::istringstream bad("Facts no tab here\n");
  CHECK_THROWS_AS(CueTable::parse(bad), ValidationError);
  std::istringstream bad_role("Preamble\tx\n");
  CHECK_THROWS_AS(CueTable::parse(bad_role), ValidationError);
}

TEST_CASE("heuristic annotator") {
  HeuristicAnnotator h;
  CHECK(h.classify("The appellant was convicted under section 302.", 5, 20) == R::kFacts);
  CHECK(h.classify("The question before us is whether the confession is admissible.", 5, 20) == R::kIssue);
  // Positional prior for sentences without cues.
  CHECK(h.classify("Nothing to see.", 0, 20) == R::kFacts);
  CHECK(h.classify("Nothing to see.", 1, 20) == R::kFacts);
  CHECK(h.classify("Nothing to see.", 2, 20) == R::kOther);
  CHECK(h.classify("Nothing to see.", 18, 20) == R::kDecision);
  CHECK(h.classify("Nothing to see.", 0, 1) == R::kFacts);

  auto d = doc("x", "The appellant was convicted. Counsel argued otherwise. The appeal is dismissed.");
  auto sents = h.annotate(d);
  REQUIRE(sents.size() == 3);
  CHECK(sents[0].role == R::kFacts);
  CHECK(sents[2].role == R::kDecision);
  CHECK(sents[2].index == 2);
  CHECK(h.annotate(d) == sents);
}

TEST_CASE("file annotator passes labels through") {
  auto d = annotated("a", {{"One.", R::kIssue}, {"Two.", R::kArgument}});
  CHECK(FileAnnotator().annotate(d) == d.sentences);
  CHECK(FileAnnotator().annotate(doc("e", "")).empty());
  try {
    FileAnnotator().annotate(doc("plain", "Some text."));
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("plain") != std::string::npos);
  }
}

TEST_CASE("annotate_corpus keeps raw text") {
  Corpus c({doc("a", "First fact. The appeal is allowed.")});
  auto out = annotate_corpus(c, HeuristicAnnotator());
  CHECK(out.at("a").raw_text == c.at("a").raw_text);
  CHECK(out.at("a").sentences.size() == 2);
}

TEST_CASE("role presets") {
  CHECK(RoleConfig::preset("facts_issue_reasoning").included_roles ==
        std::set<R>{R::kFacts, R::kIssue, R::kReasoning});
  CHECK(RoleConfig::preset("facts_issue_arguments").included_roles ==
        std::set<R>{R::kFacts, R::kIssue, R::kArgument});
  CHECK(RoleConfig::preset("facts_issue_decision").included_roles ==
        std::set<R>{R::kFacts, R::kIssue, R::kDecision});
  CHECK(RoleConfig::preset("full").is_full());
  CHECK(RoleConfig::preset_names().size() == 6);
  for (const auto& name : RoleConfig::preset_names()) {
    if (name != "full") CHECK_FALSE(RoleConfig::preset(name).includes(R::kOther));
  }
  auto custom = RoleConfig::preset("custom:Facts,Ratio");
  CHECK(custom.included_roles == std::set<R>{R::kFacts, R::kReasoning});
  CHECK_THROWS_AS(RoleConfig::preset("facts_only"), ValidationError);
  CHECK_THROWS_AS(RoleConfig::preset("custom:"), ValidationError);
  CHECK_THROWS_AS(RoleConfig::preset("custom:Facts,Preamble"), ValidationError);
}

TEST_CASE("building role queries") {
  auto d = annotated("q", {{"A happened.", R::kFacts}, {"Is B lawful?", R::kIssue}, {"C followed.", R::kFacts}});
  auto full = build_role_query(d, RoleConfig::preset("full"));
  CHECK(full.text == "A happened. Is B lawful? C followed.");
  CHECK_FALSE(full.empty);

  auto facts = build_role_query(d, RoleConfig::preset("facts"));
  CHECK(facts.text == "A happened. C followed.");
  CHECK(facts.sentence_indices == std::vector<std::size_t>{0, 2});
  CHECK(facts.config_name == "facts");

  auto other = annotated("o", {{"Counsel said.", R::kArgument}, {"Held.", R::kReasoning}});
  auto empty = build_role_query(other, RoleConfig::preset("facts_issue"));
  CHECK(empty.empty);
  CHECK(empty.text.empty());

  CHECK_THROWS_AS(build_role_query(doc("u", "unlabelled text"), RoleConfig::preset("full")),
                  ValidationError);
}

TEST_CASE("strategy names") {
  CHECK(parse_annotator_strategy("heuristic") == AnnotatorStrategy::kHeuristic);
  CHECK(to_string(AnnotatorStrategy::kExternal) == "external");
  CHECK_THROWS_AS(parse_annotator_strategy("crf"), ValidationError);
}
