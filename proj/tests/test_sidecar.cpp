#include <doctest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "pcr/error.hpp"
#include "pcr/segmenter.hpp"
#include "pcr/sidecar.hpp"
#include "pcr/text.hpp"
#include "support.hpp"

using namespace pcr;
using nlohmann::json;

namespace {

SidecarClient::Options fast_options() {
  SidecarClient::Options o;
  o.max_attempts = 2;
  o.backoff = std::chrono::milliseconds(5);
  o.timeout = std::chrono::milliseconds(5000);
  return o;
}

bool all_passed(const std::vector<ConformanceCheck>& checks) {
  for (const auto& c : checks) {
    if (!c.passed) {
      MESSAGE(c.name << ": " << c.detail);
      return false;
    }
  }
  return !checks.empty();
}

}  // namespace

TEST_CASE("endpoint parsing") {
  auto tcp = Endpoint::parse("tcp://localhost:9000");
  CHECK(tcp.kind == Endpoint::Kind::kTcp);
  CHECK(tcp.host == "localhost");
  CHECK(tcp.port == 9000);
  CHECK(Endpoint::parse("127.0.0.1:1").to_string() == "tcp://127.0.0.1:1");
  auto ux = Endpoint::parse("unix:/tmp/x.sock");
  CHECK(ux.kind == Endpoint::Kind::kUnix);
  CHECK(ux.path == "/tmp/x.sock");
  CHECK(ux.to_string() == "unix:/tmp/x.sock");
  for (const char* bad : {"nohost", ":80", "h:", "h:99999", "h:8x", "unix:"}) {
    CHECK_THROWS_AS(Endpoint::parse(bad), ValidationError);
  }
}

TEST_CASE("frame encoding") {
  CHECK(encode_frame("{}") == "2\n{}");
  CHECK(encode_frame("") == "0\n");
  // Byte count, not character count.
  CHECK(encode_frame("\xC3\xA9") == "2\n\xC3\xA9");
}

TEST_CASE("frames over a socket pair") {
  int fds[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
  write_frame(fds[0], "hello world");
  write_frame(fds[0], "");
  CHECK(read_frame(fds[1]) == "hello world");
  CHECK(read_frame(fds[1]) == "");
  const std::string junk = "12a\n";
  REQUIRE(::write(fds[0], junk.data(), junk.size()) == static_cast<ssize_t>(junk.size()));
  CHECK_THROWS_AS(read_frame(fds[1]), TransportError);
  const std::string partial = "10\nabc";
  REQUIRE(::write(fds[0], partial.data(), partial.size()) == static_cast<ssize_t>(partial.size()));
  ::close(fds[0]);
  CHECK_THROWS_AS(read_frame(fds[1]), TransportError);
  ::close(fds[1]);
}

TEST_CASE("stub answers requests directly") {
  StubSidecarServer server({16, 0, true});
  const auto hello = server.handle({{"id", 7}, {"kind", "hello"}, {"payload", json::object()}});
  CHECK(hello["id"] == 7);
  CHECK(hello["payload"]["dimension"] == 16);
  const auto unknown = server.handle({{"id", 8}, {"kind", "dance"}, {"payload", json::object()}});
  CHECK(unknown["id"] == 8);
  CHECK(unknown.contains("error"));
  CHECK(unknown["error"]["message"].is_string());
  const auto bad = server.handle({{"id", 9}, {"kind", "embed"}, {"payload", {{"texts", 3}}}});
  CHECK(bad.contains("error"));
  CHECK(server.handle(json::array()).contains("error"));
}

TEST_CASE("stub passes conformance over tcp") {
  StubSidecarServer server({32, 0, true});
  SidecarClient client(server.endpoint(), fast_options());
  CHECK(all_passed(run_conformance(client)));
}

TEST_CASE("stub passes conformance over a unix socket") {
  const auto dir = testing::scratch_dir("sidecar_unix");
  StubSidecarServer server({32, 0, true}, Endpoint::parse("unix:" + (dir / "s.sock").string()));
  SidecarClient client(server.endpoint(), fast_options());
  CHECK(all_passed(run_conformance(client)));
  server.stop();
  CHECK_FALSE(std::filesystem::exists(dir / "s.sock"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("conformance also passes without annotate") {
  StubSidecarServer server({8, 0, false});
  SidecarClient client(server.endpoint(), fast_options());
  CHECK(all_passed(run_conformance(client)));
  CHECK_THROWS_AS(client.annotate({"a sentence."}), TransportError);
}

TEST_CASE("sidecar embedder matches the local hashing embedder") {
  StubSidecarServer server({24, 0, true});
  auto client = std::make_shared<SidecarClient>(server.endpoint(),
                                                SidecarClient::Options{2, std::chrono::milliseconds(5),
                                                                       std::chrono::milliseconds(5000), 3});
  SidecarEmbedder remote(client);
  HashingEmbedder local(24);
  CHECK(remote.dimension() == 24);
  // More texts than one batch.
  const std::vector<std::string> texts = {"alpha beta", "", "gamma", "alpha", "delta epsilon zeta",
                                          "beta beta beta", "x"};
  CHECK(remote.embed(texts) == local.embed(texts));
}

TEST_CASE("sidecar scorer matches jaccard and reports truncation") {
  StubSidecarServer server({8, 10, true});
  auto client = std::make_shared<SidecarClient>(server.endpoint(), fast_options());
  SidecarPairScorer scorer(client);
  CHECK(scorer.max_passage_chars() == 10);
  const std::vector<std::string> passages = {"a b c", "c d", "zzz"};
  const auto scores = scorer.score("a b", passages);
  REQUIRE(scores.size() == 3);
  for (std::size_t i = 0; i < passages.size(); ++i) {
    CHECK(scores[i] == doctest::Approx(jaccard_similarity("a b", passages[i])));
  }

  const json resp = client->call("score_pairs", {{"pairs", json::array({json::array({"q", "0123456789abc"}),
                                                                          json::array({"q", "short"})})}});
  CHECK(resp["truncated"] == json::array({true, false}));
}

TEST_CASE("unknown kinds raise structured errors and the connection survives") {
  StubSidecarServer server({8, 0, true});
  SidecarClient client(server.endpoint(), fast_options());
  const auto raw = client.exchange({{"id", 1}, {"kind", "nope"}, {"payload", json::object()}});
  CHECK(raw["error"]["message"].get<std::string>().find("nope") != std::string::npos);
  CHECK_THROWS_AS(client.call("nope", json::object()), TransportError);
  CHECK(client.hello().dimension == 8);
}

TEST_CASE("unreachable endpoint fails after retries") {
  // Reserve a port, then release it so nothing listens there.
  std::uint16_t port = 0;
  {
    StubSidecarServer probe({8, 0, true});
    port = probe.endpoint().port;
  }
  Endpoint ep;
  ep.port = port;
  SidecarClient client(ep, fast_options());
  try {
    client.hello();
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(std::string(e.what()).find("2 attempt") != std::string::npos);
  }
  CHECK_THROWS_AS(SidecarEmbedder(std::make_shared<SidecarClient>(ep, fast_options())),
                  TransportError);
}

TEST_CASE("a restarted server is picked up by the retry") {
  const auto dir = testing::scratch_dir("sidecar_restart");
  const auto ep = Endpoint::parse("unix:" + (dir / "r.sock").string());
  auto server = std::make_unique<StubSidecarServer>(StubSidecarServer::Options{8, 0, true}, ep);
  SidecarClient client(ep, fast_options());
  CHECK(client.hello().dimension == 8);
  server.reset();
  server = std::make_unique<StubSidecarServer>(StubSidecarServer::Options{8, 0, true}, ep);
  // The old connection is dead; the first attempt fails and the retry reconnects.
  CHECK(client.hello().dimension == 8);
  server.reset();
  std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent clients share one server") {
  StubSidecarServer server({16, 0, true});
  auto shared = std::make_shared<SidecarClient>(server.endpoint(), fast_options());
  HashingEmbedder local(16);
  std::vector<std::thread> workers;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&, t] {
      SidecarClient own(server.endpoint(), fast_options());
      for (int i = 0; i < 20; ++i) {
        const std::vector<std::string> texts = {"t" + std::to_string(t) + " w" + std::to_string(i)};
        if (own.embed(texts) != local.embed(texts)) ++mismatches;
        if (shared->embed(texts) != local.embed(texts)) ++mismatches;
      }
    });
  }
  for (auto& w : workers) w.join();
  CHECK(mismatches == 0);
}

TEST_CASE("external annotator agrees with the heuristic one") {
  StubSidecarServer server({8, 0, true});
  auto client = std::make_shared<SidecarClient>(server.endpoint(), fast_options());
  ExternalAnnotator external(client);
  HeuristicAnnotator heuristic;
  const auto d = testing::doc("d", "The appellant was arrested in 2001. The question is whether the "
                                   "search was lawful. We hold that it was not. The appeal is allowed.");
  const auto a = external.annotate(d);
  const auto b = heuristic.annotate(d);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(a[i].role == b[i].role);
  }
}
