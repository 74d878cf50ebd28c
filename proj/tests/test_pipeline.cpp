#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pcr/error.hpp"
#include "pcr/pipeline.hpp"
#include "support.hpp"

using namespace pcr;
using pcr::testing::annotated;
using pcr::testing::doc;
using nlohmann::json;
using R = RhetoricalRole;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Twelve documents over three topics; the first document of each topic cites
/// the other members.
Corpus topic_corpus() {
  std::vector<Document> docs;
  const std::vector<std::string> topics = {"contract breach damages seller buyer",
                                           "murder evidence witness confession police",
                                           "tax assessment income revenue deduction"};
  for (std::size_t t = 0; t < topics.size(); ++t) {
    for (int i = 0; i < 4; ++i) {
      const std::string id = "t" + std::to_string(t) + "d" + std::to_string(i);
      std::set<std::string> cites;
      if (i == 0) {
        for (int j = 1; j < 4; ++j) cites.insert("t" + std::to_string(t) + "d" + std::to_string(j));
      }
      docs.push_back(annotated(id,
                               {{"The facts concern " + topics[t] + " case " + std::to_string(i) + ".",
                                 R::kFacts},
                                {"The issue is " + topics[t] + ".", R::kIssue},
                                {"We hold for the respondent.", R::kDecision}},
                               cites));
    }
  }
  return Corpus(std::move(docs));
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.embedder_dimension = 64;
  c.k_vec = 20;
  c.ivf.nlist = 2;
  c.search.nprobe = 2;
  c.methods = {Method::kBm25Full, Method::kBm25Candidates, Method::kVector, Method::kCrossEncoder,
               Method::kTraceFull};
  return c;
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  write_corpus(corpus, out);
}

}  // namespace

TEST_CASE("config defaults") {
  const auto c = ExperimentConfig::from_json(json::object());
  CHECK(c.presets == std::vector<std::string>{"full"});
  CHECK(c.methods == std::vector<Method>{Method::kBm25Full, Method::kVector, Method::kTraceFull});
  CHECK(c.k_vec == 1000);
  CHECK(c.rrf.k_const == 60);
  CHECK(c.bm25.k1 == 1.2);
  CHECK(c.bm25.b == 0.75);
  CHECK(c.ivf.nlist == 0);
  CHECK(c.search.nprobe == 0);
  CHECK(c.chunking.max_chars == 2000);
  CHECK(c.chunking.overlap_chars == 200);
  CHECK(c.chunking.rerank_depth == 100);
  CHECK(c.k_range.k_min == 1);
  CHECK(c.k_range.k_max == 20);
  CHECK(c.k_range.best_by == BestKMetric::kF1);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config parsing and round trip") {
  const auto j = json::parse(R"({
    "presets": ["facts", "custom:Facts,Decision"],
    "methods": ["trace_full"],
    "k_vec": 50,
    "k_range": {"min": 2, "max": 9, "best_by": "recall"},
    "seed": 7,
    "ivf": {"nlist": 4},
    "search": {"nprobe": 2},
    "rrf": {"k": 10},
    "chunking": {"aggregation": "max", "rerank_depth": 5},
    "embedder": {"dimension": 32}
  })");
  const auto c = ExperimentConfig::from_json(j);
  CHECK(c.presets.size() == 2);
  CHECK(c.methods == std::vector<Method>{Method::kTraceFull});
  CHECK(c.k_vec == 50);
  CHECK(c.k_range.best_by == BestKMetric::kRecall);
  CHECK(c.ivf.seed == 7);
  CHECK(c.ivf.nlist == 4);
  CHECK(c.search.nprobe == 2);
  CHECK(c.rrf.k_const == 10);
  CHECK(c.chunking.aggregation == Aggregation::kMax);
  CHECK(c.embedder_dimension == 32);
  const auto again = ExperimentConfig::from_json(json::parse(c.to_json().dump()));
  CHECK(again.to_json() == c.to_json());
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(R"({"bogus": 1})")), ValidationError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(R"({"bm25": {"k3": 1}})")),
                  ValidationError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(R"({"k_vec": "many"})")), ValidationError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::parse(R"({"methods": ["magic"]})")),
                  ValidationError);

  auto bad = [](auto mutate) {
    ExperimentConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](auto& c) { c.k_vec = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.presets = {"nothing"}; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.k_range = {5, 2}; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.threads = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.chunking.overlap_chars = 5000; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.scorer_kind = "sidecar"; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.embedder_kind = "magic"; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.rrf.k_const = 0; }).validate(), ValidationError);
}

TEST_CASE("config file resolves relative paths and allows comments") {
  const auto dir = testing::scratch_dir("config_file");
  {
    std::ofstream out(dir / "exp.json");
    out << "{\n  // corpus next to the config\n  \"corpus\": \"c.jsonl\",\n  \"qrels\": \"/abs/q\"\n}\n";
  }
  const auto c = ExperimentConfig::load(dir / "exp.json");
  CHECK(c.corpus == dir / "c.jsonl");
  CHECK(c.qrels == "/abs/q");
  CHECK_THROWS_AS(ExperimentConfig::load(dir / "missing.json"), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("scorer endpoint comes from the environment") {
  ExperimentConfig c;
  c.scorer_endpoint = "127.0.0.1:1";
  ::setenv("PCR_SCORER_ENDPOINT", "unix:/tmp/elsewhere.sock", 1);
  c.apply_environment();
  ::unsetenv("PCR_SCORER_ENDPOINT");
  CHECK(c.scorer_endpoint == "unix:/tmp/elsewhere.sock");
  c.apply_environment();
  CHECK(c.scorer_endpoint == "unix:/tmp/elsewhere.sock");
}

TEST_CASE("method names") {
  for (auto m : {Method::kBm25Full, Method::kBm25Candidates, Method::kVector, Method::kCrossEncoder,
                 Method::kTraceFull}) {
    CHECK(parse_method(to_string(m)) == m);
    CHECK_FALSE(display_name(m).empty());
  }
  CHECK(display_name(Method::kTraceFull) == "Cross-encoder");
  CHECK(display_name(Method::kBm25Full) == "BM25");
  CHECK(display_name(Method::kVector) == "Vector DB");
  CHECK(run_file_name("custom:Facts,Issue", Method::kVector) == "custom_Facts_Issue.vector.run");
}

TEST_CASE("role queries fall back to raw text only for the full preset") {
  const auto plain = doc("p", "unannotated body", {"x"});
  const auto full = make_role_query(plain, RoleConfig::preset("full"));
  CHECK(full.text == "unannotated body");
  CHECK_FALSE(full.empty);
  CHECK_THROWS_AS(make_role_query(plain, RoleConfig::preset("facts")), ValidationError);

  const auto a = annotated("a", {{"F.", R::kFacts}, {"D.", R::kDecision}});
  CHECK(make_role_query(a, RoleConfig::preset("facts")).text == "F.");
  CHECK(make_role_query(a, RoleConfig::preset("facts_issue")).text == "F.");
  CHECK(make_role_query(a, RoleConfig::preset("custom:Issue")).empty);
}

TEST_CASE("retrieval on a topic corpus") {
  const Corpus corpus = topic_corpus();
  const auto config = small_config();
  const auto backends = make_backends(config);
  const auto idx = build_indexes(corpus, config, backends);
  REQUIRE(idx.lexical);
  REQUIRE(idx.vector);
  const auto full = RoleConfig::preset("full");
  const auto q = make_role_query(corpus.at("t1d0"), full);

  SUBCASE("every method excludes the query document and ranks its topic first") {
    for (auto m : config.methods) {
      const auto list = retrieve_query(q, m, idx, config);
      CHECK_NOTHROW(list.validate());
      const auto ids = list.doc_ids();
      CHECK(std::find(ids.begin(), ids.end(), "t1d0") == ids.end());
      REQUIRE(ids.size() >= 3);
      for (int i = 0; i < 3; ++i) CHECK(ids[i].substr(0, 2) == "t1");
    }
  }

  SUBCASE("a document is its own nearest vector") {
    ExperimentConfig c = config;
    RoleQuery self = q;
    self.query_id = "outsider";
    const auto list = retrieve_query(self, Method::kVector, idx, c);
    REQUIRE_FALSE(list.empty());
    CHECK(list.entries[0].doc_id == "t1d0");
    CHECK(list.entries[0].score == doctest::Approx(0.0).epsilon(1e-6));
  }

  SUBCASE("candidate bm25 over the whole corpus equals full bm25") {
    const auto a = retrieve_query(q, Method::kBm25Full, idx, config);
    const auto b = retrieve_query(q, Method::kBm25Candidates, idx, config);
    CHECK(a.doc_ids() == b.doc_ids());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.entries[i].score == doctest::Approx(b.entries[i].score));
    }
  }

  SUBCASE("trace with rerank depth 0 is the fusion of its stages") {
    ExperimentConfig c = config;
    c.chunking.rerank_depth = 0;
    RetrievalTrace trace;
    const auto out = retrieve_query(q, Method::kTraceFull, idx, c, &trace);
    const std::vector<RankedList> stages = {trace.vector, trace.bm25};
    auto fused = rrf_fuse(stages, c.rrf);
    fused.remove("t1d0");
    CHECK(out.doc_ids() == fused.doc_ids());
    CHECK(trace.bm25.size() == trace.vector.size());
  }

  SUBCASE("k_vec bounds every list") {
    ExperimentConfig c = config;
    c.k_vec = 2;
    for (auto m : c.methods) CHECK(retrieve_query(q, m, idx, c).size() == 2);
  }

  SUBCASE("empty queries give empty lists") {
    RoleQuery empty{"t1d0", "x", "", {}, true};
    for (auto m : config.methods) CHECK(retrieve_query(empty, m, idx, config).empty());
  }
}

TEST_CASE("missing stages are reported by name") {
  const Corpus corpus = topic_corpus();
  ExperimentConfig bm_only;
  bm_only.methods = {Method::kBm25Full};
  const auto idx = build_indexes(corpus, bm_only, make_backends(bm_only));
  CHECK_FALSE(idx.vector);
  const auto q = make_role_query(corpus.at("t0d0"), RoleConfig::preset("full"));
  try {
    retrieve_query(q, Method::kVector, idx, bm_only);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "vector");
  }

  ExperimentConfig vec_only = small_config();
  vec_only.methods = {Method::kVector};
  const auto vidx = build_indexes(corpus, vec_only, make_backends(vec_only));
  CHECK_FALSE(vidx.lexical);
  CHECK_THROWS_AS(retrieve_query(q, Method::kTraceFull, vidx, vec_only), StageError);
  CHECK_THROWS_AS(build_indexes(Corpus(), vec_only, make_backends(vec_only)), StageError);
}

TEST_CASE("index warnings for clamped parameters") {
  const Corpus corpus = topic_corpus();
  auto config = small_config();
  config.ivf.nlist = 100;
  config.search.nprobe = 500;
  const auto idx = build_indexes(corpus, config, make_backends(config));
  CHECK(idx.vector->nlist() == corpus.size());
  CHECK(idx.warnings.size() == 2);
  const auto q = make_role_query(corpus.at("t0d0"), RoleConfig::preset("full"));
  CHECK_NOTHROW(retrieve_query(q, Method::kVector, idx, config));
}

TEST_CASE("experiment writes runs, report and manifest") {
  const auto dir = testing::scratch_dir("experiment");
  write_jsonl(topic_corpus(), dir / "corpus.jsonl");
  auto config = small_config();
  config.corpus = dir / "corpus.jsonl";
  config.presets = {"full", "facts"};
  config.methods = {Method::kBm25Full, Method::kTraceFull};
  config.k_range = {1, 5};

  config.out_dir = dir / "a";
  const auto first = run_experiment(config);
  CHECK(first.run_files.size() == 4);
  CHECK(first.report.best.size() == 4);
  CHECK(first.report.rows.size() == 20);
  for (const auto& name : {"manifest.json", "report.json", "report.txt", "full.trace_full.run",
                           "facts.bm25_full.run"}) {
    CHECK(std::filesystem::exists(config.out_dir / name));
  }
  const auto manifest = json::parse(slurp(config.out_dir / "manifest.json"));
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["corpus"]["documents"] == 12);
  CHECK(manifest["corpus"]["query_documents"] == 3);
  CHECK(manifest["effective"]["rrf_k"] == 60);
  CHECK(manifest["effective"]["nlist"] == 2);
  CHECK(manifest["effective"]["nprobe"] == 2);
  CHECK(manifest["config"]["k_vec"] == 20);

  // The topic structure is easy: BM25 finds every cited document.
  for (const auto& row : first.report.best) {
    CHECK(row.map == doctest::Approx(1.0));
    CHECK(row.mrr == doctest::Approx(1.0));
    CHECK(row.k == 3);
  }

  config.out_dir = dir / "b";
  config.threads = 3;
  run_experiment(config);
  for (const auto& p : first.run_files) {
    CHECK(slurp(p) == slurp(dir / "b" / p.filename()));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("external qrels and unknown queries") {
  const auto dir = testing::scratch_dir("experiment_qrels");
  write_jsonl(topic_corpus(), dir / "corpus.jsonl");
  {
    std::ofstream q(dir / "qrels.txt");
    q << "t0d1 0 t0d0 1\nghost 0 t0d0 1\n";
  }
  auto config = small_config();
  config.corpus = dir / "corpus.jsonl";
  config.qrels = dir / "qrels.txt";
  config.methods = {Method::kBm25Full};
  config.out_dir = dir / "out";
  const auto r = run_experiment(config);
  REQUIRE(r.report.best.size() == 1);
  CHECK(r.report.best[0].evaluated_queries == 1);
  const auto warnings = r.manifest["warnings"].dump();
  CHECK(warnings.find("ghost") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("failed experiments leave a failed manifest") {
  const auto dir = testing::scratch_dir("experiment_fail");
  ExperimentConfig config;
  config.corpus = dir / "does_not_exist.jsonl";
  config.out_dir = dir / "out";
  CHECK_THROWS_AS(run_experiment(config), ValidationError);
  const auto manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["status"] == "failed");
  CHECK(manifest["error"].get<std::string>().find("does_not_exist") != std::string::npos);
  std::filesystem::remove_all(dir);
}
