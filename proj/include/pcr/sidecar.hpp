#pragma once

// Client side of the model sidecar protocol, plus an in-process stub server
// and the conformance checks any endpoint must pass.
//
// Wire format: each message is a UTF-8 JSON object prefixed by its decimal
// byte count and a newline. Requests are {id, kind, payload}; responses echo
// id and kind and carry either payload or error. Kinds: hello, embed,
// score_pairs, annotate.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcr/rerank.hpp"
#include "pcr/vector.hpp"

namespace pcr {

struct Endpoint {
  enum class Kind { kTcp, kUnix };

  Kind kind = Kind::kTcp;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string path;

  /// "tcp://host:port", "host:port" or "unix:/path/to/socket".
  static Endpoint parse(std::string_view text);
  std::string to_string() const;
};

/// "<byte count>\n<payload>"
std::string encode_frame(std::string_view payload);

/// Blocking frame I/O on a connected socket. Throw TransportError.
void write_frame(int fd, std::string_view payload);
std::string read_frame(int fd);

struct Capabilities {
  std::size_t dimension = 0;
  std::size_t max_pair_length = 0;  // characters; 0 = unlimited
  std::vector<std::string> kinds;

  bool supports(std::string_view kind) const;
};

class SidecarClient {
 public:
  struct Options {
    int max_attempts = 3;
    std::chrono::milliseconds backoff{200};
    std::chrono::milliseconds timeout{60000};
    std::size_t batch_size = 64;
  };

  explicit SidecarClient(Endpoint endpoint);
  SidecarClient(Endpoint endpoint, Options options);
  ~SidecarClient();

  SidecarClient(const SidecarClient&) = delete;
  SidecarClient& operator=(const SidecarClient&) = delete;

  /// One request/response round trip without retries or validation.
  nlohmann::json exchange(const nlohmann::json& request);

  /// Sends `kind` with a fresh id, retrying transport failures, and returns
  /// the response payload. Error responses and id mismatches throw TransportError.
  nlohmann::json call(std::string_view kind, const nlohmann::json& payload);

  Capabilities hello();
  std::vector<Embedding> embed(const std::vector<std::string>& texts);
  std::vector<double> score_pairs(const std::vector<std::pair<std::string, std::string>>& pairs);
  std::vector<std::string> annotate(const std::vector<std::string>& sentences);

  const Endpoint& endpoint() const noexcept { return endpoint_; }
  const Options& options() const noexcept { return options_; }

 private:
  void connect_locked();
  void disconnect_locked();

  Endpoint endpoint_;
  Options options_;
  std::mutex mutex_;
  int fd_ = -1;
  std::uint64_t next_id_ = 1;
};

class SidecarEmbedder final : public Embedder {
 public:
  explicit SidecarEmbedder(std::shared_ptr<SidecarClient> client);

  std::size_t dimension() const override { return dimension_; }
  std::string name() const override { return "sidecar"; }
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<SidecarClient> client_;
  std::size_t dimension_ = 0;
};

class SidecarPairScorer final : public PairScorer {
 public:
  explicit SidecarPairScorer(std::shared_ptr<SidecarClient> client);

  std::string name() const override { return "sidecar"; }
  std::vector<double> score(std::string_view query,
                            std::span<const std::string> passages) const override;
  std::size_t max_passage_chars() const override { return max_pair_length_; }

 private:
  std::shared_ptr<SidecarClient> client_;
  std::size_t max_pair_length_ = 0;
};

/// Serves the protocol from the hashing embedder, Jaccard scorer and
/// heuristic annotator.
class StubSidecarServer {
 public:
  struct Options {
    std::size_t dimension = 768;
    std::size_t max_pair_length = 0;
    bool annotate = true;
  };

  /// Binds `endpoint` (port 0 picks a free port) and starts serving.
  explicit StubSidecarServer(Options options, Endpoint endpoint = Endpoint::parse("127.0.0.1:0"));
  ~StubSidecarServer();

  StubSidecarServer(const StubSidecarServer&) = delete;
  StubSidecarServer& operator=(const StubSidecarServer&) = delete;

  const Endpoint& endpoint() const noexcept { return endpoint_; }
  /// Answers one decoded request; exposed for direct testing.
  nlohmann::json handle(const nlohmann::json& request) const;
  void stop();

 private:
  void accept_loop();
  void serve_connection(int fd);

  Options options_;
  Endpoint endpoint_;
  HashingEmbedder embedder_;
  JaccardPairScorer scorer_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex connections_mutex_;
  std::vector<std::pair<int, std::thread>> connections_;
};

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Length equalities, id echo, determinism of repeated requests, dimension
/// consistency, and structured errors for unknown kinds.
std::vector<ConformanceCheck> run_conformance(SidecarClient& client);

}  // namespace pcr
