#include "pcr/sidecar.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>

#include "pcr/corpus.hpp"
#include "pcr/error.hpp"
#include "pcr/segmenter.hpp"
#include "pcr/text.hpp"

namespace pcr {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxFrameBytes = std::size_t{1} << 30;

std::string errno_text() { return std::strerror(errno); }

void set_timeouts(int fd, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

int connect_to(const Endpoint& ep) {
  if (ep.kind == Endpoint::Kind::kUnix) {
    int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket: " + errno_text());
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, ep.path.c_str(), sizeof(addr.sun_path) - 1);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string why = errno_text();
      ::close(fd);
      throw TransportError("connect " + ep.to_string() + ": " + why);
    }
    return fd;
  }
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  if (int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw TransportError("resolve " + ep.to_string() + ": " + gai_strerror(rc));
  }
  int fd = -1;
  std::string why = "no addresses";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    why = errno_text();
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("connect " + ep.to_string() + ": " + why);
  return fd;
}

void read_exact(int fd, char* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) throw TransportError("connection closed mid-frame");
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError("recv: " + errno_text());
    }
    got += static_cast<std::size_t>(r);
  }
}

json error_response(const json& id, const json& kind, const std::string& message) {
  return {{"id", id}, {"kind", kind}, {"error", {{"message", message}}}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Endpoint and framing

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint ep;
  if (text.substr(0, 5) == "unix:") {
    ep.kind = Kind::kUnix;
    ep.path = std::string(text.substr(5));
    if (ep.path.empty()) throw ValidationError("unix endpoint needs a socket path");
    return ep;
  }
  if (text.substr(0, 6) == "tcp://") text.remove_prefix(6);
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ValidationError("endpoint '" + std::string(text) + "' must look like host:port");
  }
  ep.host = std::string(text.substr(0, colon));
  const auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535) {
    throw ValidationError("endpoint '" + std::string(text) + "' has an invalid port");
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

std::string Endpoint::to_string() const {
  if (kind == Kind::kUnix) return "unix:" + path;
  return "tcp://" + host + ":" + std::to_string(port);
}

std::string encode_frame(std::string_view payload) {
  std::string out = std::to_string(payload.size());
  out += '\n';
  out.append(payload);
  return out;
}

void write_frame(int fd, std::string_view payload) {
  const std::string frame = encode_frame(payload);
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t w = ::send(fd, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError("send: " + errno_text());
    }
    sent += static_cast<std::size_t>(w);
  }
}

std::string read_frame(int fd) {
  std::string header;
  char c = 0;
  while (true) {
    read_exact(fd, &c, 1);
    if (c == '\n') break;
    if (c < '0' || c > '9' || header.size() >= 12) throw TransportError("bad frame header");
    header.push_back(c);
  }
  if (header.empty()) throw TransportError("bad frame header");
  const std::size_t size = std::stoull(header);
  if (size > kMaxFrameBytes) throw TransportError("frame too large");
  std::string payload(size, '\0');
  read_exact(fd, payload.data(), size);
  return payload;
}

bool Capabilities::supports(std::string_view kind) const {
  return std::find(kinds.begin(), kinds.end(), kind) != kinds.end();
}

// ---------------------------------------------------------------------------
// Client

SidecarClient::SidecarClient(Endpoint endpoint) : SidecarClient(std::move(endpoint), Options{}) {}

SidecarClient::SidecarClient(Endpoint endpoint, Options options)
    : endpoint_(std::move(endpoint)), options_(options) {
  if (options_.max_attempts < 1) options_.max_attempts = 1;
  if (options_.batch_size == 0) options_.batch_size = 1;
}

SidecarClient::~SidecarClient() { disconnect_locked(); }

void SidecarClient::connect_locked() {
  if (fd_ >= 0) return;
  fd_ = connect_to(endpoint_);
  set_timeouts(fd_, options_.timeout);
}

void SidecarClient::disconnect_locked() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

json SidecarClient::exchange(const json& request) {
  std::lock_guard lock(mutex_);
  try {
    connect_locked();
    write_frame(fd_, request.dump());
    return json::parse(read_frame(fd_));
  } catch (const json::parse_error& e) {
    disconnect_locked();
    throw TransportError(std::string("malformed response: ") + e.what());
  } catch (const TransportError&) {
    disconnect_locked();
    throw;
  }
}

json SidecarClient::call(std::string_view kind, const json& payload) {
  json response;
  std::uint64_t id = 0;
  for (int attempt = 1;; ++attempt) {
    {
      std::lock_guard lock(mutex_);
      id = next_id_++;
    }
    try {
      response = exchange({{"id", id}, {"kind", kind}, {"payload", payload}});
      break;
    } catch (const TransportError& e) {
      if (attempt >= options_.max_attempts) {
        throw TransportError("sidecar " + endpoint_.to_string() + " failed after " +
                             std::to_string(attempt) + " attempt(s): " + e.what());
      }
      std::this_thread::sleep_for(options_.backoff * attempt);
    }
  }
  if (!response.is_object() || response.value("id", json()) != json(id)) {
    throw TransportError("sidecar response id does not match request " + std::to_string(id));
  }
  if (response.value("kind", std::string()) != kind) {
    throw TransportError("sidecar response kind does not match '" + std::string(kind) + "'");
  }
  if (response.contains("error")) {
    throw TransportError("sidecar error for '" + std::string(kind) +
                         "': " + response["error"].dump());
  }
  if (!response.contains("payload") || !response["payload"].is_object()) {
    throw TransportError("sidecar response has no payload");
  }
  return response["payload"];
}

Capabilities SidecarClient::hello() {
  const json p = call("hello", json::object());
  Capabilities caps;
  try {
    caps.dimension = p.value("dimension", std::size_t{0});
    caps.max_pair_length = p.value("max_pair_length", std::size_t{0});
    caps.kinds = p.value("kinds", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw TransportError(std::string("bad hello payload: ") + e.what());
  }
  return caps;
}

std::vector<Embedding> SidecarClient::embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += options_.batch_size) {
    const std::size_t end = std::min(texts.size(), start + options_.batch_size);
    const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                         texts.begin() + static_cast<std::ptrdiff_t>(end));
    const json p = call("embed", {{"texts", batch}});
    try {
      auto vectors = p.at("vectors").get<std::vector<Embedding>>();
      if (vectors.size() != batch.size()) {
        throw TransportError("embed returned " + std::to_string(vectors.size()) + " vectors for " +
                             std::to_string(batch.size()) + " texts");
      }
      for (auto& v : vectors) out.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw TransportError(std::string("bad embed payload: ") + e.what());
    }
  }
  return out;
}

std::vector<double> SidecarClient::score_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (std::size_t start = 0; start < pairs.size(); start += options_.batch_size) {
    const std::size_t end = std::min(pairs.size(), start + options_.batch_size);
    json batch = json::array();
    for (std::size_t i = start; i < end; ++i) batch.push_back({pairs[i].first, pairs[i].second});
    const json p = call("score_pairs", {{"pairs", batch}});
    try {
      const auto scores = p.at("scores").get<std::vector<double>>();
      if (scores.size() != end - start) {
        throw TransportError("score_pairs returned " + std::to_string(scores.size()) +
                             " scores for " + std::to_string(end - start) + " pairs");
      }
      out.insert(out.end(), scores.begin(), scores.end());
    } catch (const json::exception& e) {
      throw TransportError(std::string("bad score_pairs payload: ") + e.what());
    }
  }
  return out;
}

std::vector<std::string> SidecarClient::annotate(const std::vector<std::string>& sentences) {
  const json p = call("annotate", {{"sentences", sentences}});
  try {
    auto roles = p.at("roles").get<std::vector<std::string>>();
    if (roles.size() != sentences.size()) {
      throw TransportError("annotate returned " + std::to_string(roles.size()) + " roles for " +
                           std::to_string(sentences.size()) + " sentences");
    }
    return roles;
  } catch (const json::exception& e) {
    throw TransportError(std::string("bad annotate payload: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Adapters

SidecarEmbedder::SidecarEmbedder(std::shared_ptr<SidecarClient> client)
    : client_(std::move(client)) {
  const auto caps = client_->hello();
  if (!caps.supports("embed") || caps.dimension == 0) {
    throw TransportError("sidecar " + client_->endpoint().to_string() + " does not serve embed");
  }
  dimension_ = caps.dimension;
}

std::vector<Embedding> SidecarEmbedder::embed(std::span<const std::string> texts) const {
  auto vectors = client_->embed(std::vector<std::string>(texts.begin(), texts.end()));
  for (const auto& v : vectors) {
    if (v.size() != dimension_) {
      throw TransportError("sidecar vector dimension " + std::to_string(v.size()) +
                           " differs from advertised " + std::to_string(dimension_));
    }
  }
  return vectors;
}

SidecarPairScorer::SidecarPairScorer(std::shared_ptr<SidecarClient> client)
    : client_(std::move(client)) {
  const auto caps = client_->hello();
  if (!caps.supports("score_pairs")) {
    throw TransportError("sidecar " + client_->endpoint().to_string() +
                         " does not serve score_pairs");
  }
  max_pair_length_ = caps.max_pair_length;
}

std::vector<double> SidecarPairScorer::score(std::string_view query,
                                             std::span<const std::string> passages) const {
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(passages.size());
  for (const auto& p : passages) pairs.emplace_back(std::string(query), p);
  return client_->score_pairs(pairs);
}

// ---------------------------------------------------------------------------
// Stub server

StubSidecarServer::StubSidecarServer(Options options, Endpoint endpoint)
    : options_(options), endpoint_(std::move(endpoint)), embedder_(options.dimension) {
  if (endpoint_.kind == Endpoint::Kind::kUnix) {
    listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket: " + errno_text());
    ::unlink(endpoint_.path.c_str());
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, endpoint_.path.c_str(), sizeof(addr.sun_path) - 1);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string why = errno_text();
      ::close(listen_fd_);
      throw TransportError("bind " + endpoint_.to_string() + ": " + why);
    }
  } else {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket: " + errno_text());
    int yes = 1;
    setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(endpoint_.port);
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (::getaddrinfo(endpoint_.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
      ::close(listen_fd_);
      throw TransportError("cannot resolve " + endpoint_.host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string why = errno_text();
      ::close(listen_fd_);
      throw TransportError("bind " + endpoint_.to_string() + ": " + why);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    endpoint_.port = ntohs(addr.sin_port);
  }
  if (::listen(listen_fd_, 16) != 0) {
    const std::string why = errno_text();
    ::close(listen_fd_);
    throw TransportError("listen: " + why);
  }
  acceptor_ = std::thread([this] { accept_loop(); });
}

StubSidecarServer::~StubSidecarServer() { stop(); }

void StubSidecarServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::pair<int, std::thread>> conns;
  {
    std::lock_guard lock(connections_mutex_);
    conns.swap(connections_);
  }
  for (auto& [fd, _] : conns) ::shutdown(fd, SHUT_RDWR);
  for (auto& [fd, th] : conns) {
    if (th.joinable()) th.join();
    ::close(fd);
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
  if (endpoint_.kind == Endpoint::Kind::kUnix) ::unlink(endpoint_.path.c_str());
}

void StubSidecarServer::accept_loop() {
  while (!stopping_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(connections_mutex_);
    connections_.emplace_back(fd, std::thread([this, fd] { serve_connection(fd); }));
  }
}

void StubSidecarServer::serve_connection(int fd) {
  while (!stopping_) {
    std::string frame;
    try {
      frame = read_frame(fd);
    } catch (const TransportError&) {
      return;
    }
    json response;
    try {
      response = handle(json::parse(frame));
    } catch (const json::parse_error& e) {
      response = error_response(nullptr, nullptr, std::string("malformed request: ") + e.what());
    }
    try {
      write_frame(fd, response.dump());
    } catch (const TransportError&) {
      return;
    }
  }
}

json StubSidecarServer::handle(const json& request) const {
  if (!request.is_object() || !request.contains("id") || !request.contains("kind") ||
      !request["kind"].is_string()) {
    return error_response(request.is_object() ? request.value("id", json()) : json(), nullptr,
                          "request needs id and kind");
  }
  const json& id = request["id"];
  const std::string kind = request["kind"].get<std::string>();
  const json payload = request.value("payload", json::object());
  try {
    if (kind == "hello") {
      std::vector<std::string> kinds = {"embed", "score_pairs"};
      if (options_.annotate) kinds.push_back("annotate");
      return {{"id", id},
              {"kind", kind},
              {"payload",
               {{"dimension", options_.dimension},
                {"max_pair_length", options_.max_pair_length},
                {"kinds", kinds}}}};
    }
    if (kind == "embed") {
      const auto texts = payload.at("texts").get<std::vector<std::string>>();
      return {{"id", id},
              {"kind", kind},
              {"payload",
               {{"vectors", embedder_.embed(texts)},
                {"dimension", options_.dimension},
                {"truncated", std::vector<bool>(texts.size(), false)}}}};
    }
    if (kind == "score_pairs") {
      const auto pairs = payload.at("pairs").get<std::vector<std::pair<std::string, std::string>>>();
      std::vector<double> scores;
      std::vector<bool> truncated;
      for (const auto& [query, doc] : pairs) {
        std::string passage = doc;
        const bool cut =
            options_.max_pair_length > 0 && text::char_count(passage) > options_.max_pair_length;
        if (cut) passage = text::truncate_chars(passage, options_.max_pair_length);
        scores.push_back(jaccard_similarity(query, passage));
        truncated.push_back(cut);
      }
      return {{"id", id},
              {"kind", kind},
              {"payload", {{"scores", scores}, {"truncated", truncated}}}};
    }
    if (kind == "annotate" && options_.annotate) {
      const auto sentences = payload.at("sentences").get<std::vector<std::string>>();
      std::vector<std::string> roles;
      for (auto role : HeuristicAnnotator().classify_all(sentences)) {
        roles.emplace_back(to_string(role));
      }
      return {{"id", id}, {"kind", kind}, {"payload", {{"roles", roles}}}};
    }
    return error_response(id, kind, "unsupported kind '" + kind + "'");
  } catch (const json::exception& e) {
    return error_response(id, kind, std::string("bad payload: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Conformance

std::vector<ConformanceCheck> run_conformance(SidecarClient& client) {
  std::vector<ConformanceCheck> checks;
  auto check = [&](std::string name, auto&& body) {
    ConformanceCheck c{std::move(name), false, {}};
    try {
      c.detail = body();
      c.passed = c.detail.empty();
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(std::move(c));
  };
  auto echoes = [](const json& req, const json& resp) {
    return resp.is_object() && resp.value("id", json()) == req["id"] &&
           resp.value("kind", json()) == req["kind"];
  };

  Capabilities caps;
  check("hello advertises capabilities", [&]() -> std::string {
    const json req = {{"id", 9001}, {"kind", "hello"}, {"payload", json::object()}};
    const json resp = client.exchange(req);
    if (!echoes(req, resp)) return "id/kind not echoed";
    caps = client.hello();
    if (caps.kinds.empty()) return "no kinds advertised";
    return {};
  });

  if (caps.supports("embed")) {
    const std::vector<std::string> texts = {"The appellant was convicted.", "", "Whether bail lies?"};
    check("embed lengths, dimension and id echo", [&]() -> std::string {
      const json req = {{"id", 9002}, {"kind", "embed"}, {"payload", {{"texts", texts}}}};
      const json resp = client.exchange(req);
      if (!echoes(req, resp)) return "id/kind not echoed";
      const auto vectors = resp.at("payload").at("vectors").get<std::vector<Embedding>>();
      if (vectors.size() != texts.size()) return "vector count differs from text count";
      for (const auto& v : vectors) {
        if (v.size() != caps.dimension) return "vector dimension differs from advertised";
      }
      return {};
    });
    check("embed is deterministic", [&]() -> std::string {
      return client.embed(texts) == client.embed(texts) ? "" : "repeated embed differs";
    });
    check("embed of an empty batch", [&]() -> std::string {
      return client.embed({}).empty() ? "" : "non-empty response for empty batch";
    });
  }

  if (caps.supports("score_pairs")) {
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"murder conviction appeal", "The appeal against the murder conviction."},
        {"murder conviction appeal", "The appeal against the murder conviction."},
        {"bail", "Land acquisition compensation."}};
    check("score_pairs lengths and id echo", [&]() -> std::string {
      const json req = {{"id", 9003}, {"kind", "score_pairs"}, {"payload", {{"pairs", pairs}}}};
      const json resp = client.exchange(req);
      if (!echoes(req, resp)) return "id/kind not echoed";
      const auto scores = resp.at("payload").at("scores").get<std::vector<double>>();
      if (scores.size() != pairs.size()) return "score count differs from pair count";
      if (scores[0] != scores[1]) return "identical pairs scored differently";
      return {};
    });
    check("score_pairs is deterministic", [&]() -> std::string {
      return client.score_pairs(pairs) == client.score_pairs(pairs) ? "" : "repeated scores differ";
    });
  }

  if (caps.supports("annotate")) {
    check("annotate lengths and role names", [&]() -> std::string {
      const std::vector<std::string> sentences = {"The appellant was convicted.",
                                                  "The question before us is whether bail lies."};
      const auto roles = client.annotate(sentences);
      if (roles.size() != sentences.size()) return "role count differs from sentence count";
      for (const auto& r : roles) parse_role(r);
      return {};
    });
  }

  check("unknown kind yields a structured error", [&]() -> std::string {
    const json req = {{"id", 9004}, {"kind", "no_such_kind"}, {"payload", json::object()}};
    const json resp = client.exchange(req);
    if (resp.value("id", json()) != req["id"]) return "id not echoed";
    if (!resp.contains("error")) return "no error field";
    client.hello();
    return {};
  });
  return checks;
}

}  // namespace pcr
