#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cap/capabilities.hpp"

namespace cap::backend {

enum class Mode { Live, Record, Replay };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

// Route names of the wire protocol.
inline constexpr std::string_view kGenerateRoute = "/generate";
inline constexpr std::string_view kEmbedRoute = "/embed";
inline constexpr std::string_view kAttentionRoute = "/attention";

// Endpoint scheme that selects the in-process reference model instead of HTTP.
inline constexpr std::string_view kToyEndpoint = "toy:";

struct BackendConfig {
  std::string endpoint = "http://127.0.0.1:8080";
  std::string model_name = "default";
  std::chrono::milliseconds timeout{60000};
  std::size_t retries = 2;
  std::chrono::milliseconds backoff{500};
  Mode mode = Mode::Live;
  std::filesystem::path cassette;
  std::size_t max_in_flight = 4;
  // Inputs to /attention longer than this many bytes are refused client-side
  // (0 disables the check and leaves it to the server).
  std::size_t max_attention_bytes = 0;
  // Per-route endpoint overrides (e.g. "/embed" -> a separate embedding
  // server); routes not listed use `endpoint`.
  std::map<std::string, std::string> route_endpoints;
};

nlohmann::json to_json(const BackendConfig& config);

struct Reply {
  int status = 200;
  nlohmann::json body;
};

// Moves one JSON request to a route and returns the JSON reply.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Reply post(std::string_view route, const nlohmann::json& request) = 0;
};

// Total HTTP attempts made by every HttpTransport in this process.
std::uint64_t network_operations();

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(const BackendConfig& config);
  Reply post(std::string_view route, const nlohmann::json& request) override;

 private:
  std::string origin_;
  std::string path_prefix_;
  std::chrono::milliseconds timeout_;
  std::size_t retries_;
  std::chrono::milliseconds backoff_;
};

// Sends each route to its own transport, falling back to a default one.
class RoutingTransport : public Transport {
 public:
  RoutingTransport(std::unique_ptr<Transport> fallback,
                   std::map<std::string, std::unique_ptr<Transport>, std::less<>> routes)
      : fallback_(std::move(fallback)), routes_(std::move(routes)) {}
  Reply post(std::string_view route, const nlohmann::json& request) override;

 private:
  std::unique_ptr<Transport> fallback_;
  std::map<std::string, std::unique_ptr<Transport>, std::less<>> routes_;
};

// SHA-256 (hex) of the canonical serialization of {route, request}. Object
// keys are serialized in sorted order, so field order never matters.
std::string canonical_hash(std::string_view route, const nlohmann::json& request);

struct CassetteRecord {
  std::string hash;
  std::string route;
  nlohmann::json request;
  nlohmann::json response;
};

// JSON-lines store of recorded exchanges keyed by canonical hash.
class Cassette {
 public:
  Cassette() = default;
  Cassette(Cassette&& other) noexcept;
  static Cassette load(const std::filesystem::path& path);

  const CassetteRecord* find(const std::string& hash) const;
  std::size_t size() const { return records_.size(); }

  // Adds the record in memory and, when a path is attached, appends it to the file.
  void append(CassetteRecord record);
  void attach(const std::filesystem::path& path) { path_ = path; }

 private:
  mutable std::mutex mutex_;
  std::deque<CassetteRecord> records_;
  std::unordered_map<std::string, std::size_t> by_hash_;
  std::filesystem::path path_;
};

class RecordingTransport : public Transport {
 public:
  RecordingTransport(std::unique_ptr<Transport> inner, std::shared_ptr<Cassette> cassette);
  Reply post(std::string_view route, const nlohmann::json& request) override;

 private:
  std::unique_ptr<Transport> inner_;
  std::shared_ptr<Cassette> cassette_;
};

// Serves recorded replies only; never touches the network.
class ReplayTransport : public Transport {
 public:
  explicit ReplayTransport(std::shared_ptr<const Cassette> cassette);
  Reply post(std::string_view route, const nlohmann::json& request) override;

 private:
  std::shared_ptr<const Cassette> cassette_;
};

// Backend over any transport. Builds canonical requests, validates every
// reply against the type invariants and strips stop sequences.
class Client : public Backend {
 public:
  Client(BackendConfig config, std::unique_ptr<Transport> transport);

  std::string generate(const GenerationRequest& request) override;
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
  AttentionResponse attention(const std::string& text) override;

  const BackendConfig& config() const { return config_; }

 private:
  nlohmann::json call(std::string_view route, const nlohmann::json& request);

  BackendConfig config_;
  std::unique_ptr<Transport> transport_;
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  std::size_t in_flight_ = 0;
};

// Transport for the configured endpoint and mode: REPLAY reads the cassette,
// RECORD wraps the live transport, `toy:` selects the in-process reference model.
std::unique_ptr<Transport> make_transport(const BackendConfig& config);
std::unique_ptr<Client> make_client(const BackendConfig& config);

// Truncates at the earliest occurrence of any stop sequence.
std::string strip_stop(std::string text, const std::vector<std::string>& stop);

nlohmann::json to_json(const GenerationRequest& request, std::string_view model);
AttentionResponse attention_from_json(const nlohmann::json& body);
nlohmann::json to_json(const AttentionResponse& response);

}  // namespace cap::backend
