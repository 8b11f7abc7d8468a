#include "cap/backend.hpp"

#include <cmath>
#include <fstream>

#include <openssl/evp.h>

#include "cap/error.hpp"
#include "cap/toy_model.hpp"

namespace cap::backend {

namespace {

using nlohmann::json;

[[noreturn]] void protocol_error(std::string_view route, const std::string& message) {
  throw Error(ErrorKind::BackendProtocol, std::string(route) + ": " + message);
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Live: return "live";
    case Mode::Record: return "record";
    case Mode::Replay: return "replay";
  }
  return "live";
}

Mode parse_mode(std::string_view text) {
  if (text == "live") return Mode::Live;
  if (text == "record") return Mode::Record;
  if (text == "replay") return Mode::Replay;
  throw Error(ErrorKind::Config, "unknown backend mode '" + std::string(text) + "'");
}

json to_json(const BackendConfig& config) {
  json j = {{"endpoint", config.endpoint},
          {"model", config.model_name},
          {"mode", to_string(config.mode)},
          {"cassette", config.cassette.string()},
          {"timeout_ms", config.timeout.count()},
          {"retries", config.retries}};
  if (!config.route_endpoints.empty()) j["route_endpoints"] = config.route_endpoints;
  return j;
}

std::string canonical_hash(std::string_view route, const json& request) {
  const std::string canonical = json{{"route", route}, {"request", request}}.dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::BackendProtocol, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

Cassette::Cassette(Cassette&& other) noexcept
    : records_(std::move(other.records_)), by_hash_(std::move(other.by_hash_)), path_(std::move(other.path_)) {}

Cassette Cassette::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, "cannot open cassette " + path.string());
  Cassette cassette;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      CassetteRecord record{j.at("hash").get<std::string>(), j.at("route").get<std::string>(),
                            j.at("request"), j.at("response")};
      if (!cassette.by_hash_.count(record.hash)) {
        cassette.by_hash_.emplace(record.hash, cassette.records_.size());
        cassette.records_.push_back(std::move(record));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Config, "cassette " + path.string() + " line " + std::to_string(number) + ": " + e.what());
    }
  }
  return cassette;
}

const CassetteRecord* Cassette::find(const std::string& hash) const {
  std::lock_guard lock(mutex_);
  auto it = by_hash_.find(hash);
  return it == by_hash_.end() ? nullptr : &records_[it->second];
}

void Cassette::append(CassetteRecord record) {
  std::lock_guard lock(mutex_);
  if (by_hash_.count(record.hash)) return;
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorKind::Config, "cannot append to cassette " + path_.string());
    out << json{{"hash", record.hash}, {"route", record.route}, {"request", record.request},
                {"response", record.response}}
               .dump()
        << '\n';
  }
  by_hash_.emplace(record.hash, records_.size());
  records_.push_back(std::move(record));
}

RecordingTransport::RecordingTransport(std::unique_ptr<Transport> inner, std::shared_ptr<Cassette> cassette)
    : inner_(std::move(inner)), cassette_(std::move(cassette)) {}

Reply RecordingTransport::post(std::string_view route, const json& request) {
  auto reply = inner_->post(route, request);
  if (reply.status == 200) {
    cassette_->append({canonical_hash(route, request), std::string(route), request, reply.body});
  }
  return reply;
}

ReplayTransport::ReplayTransport(std::shared_ptr<const Cassette> cassette) : cassette_(std::move(cassette)) {}

Reply ReplayTransport::post(std::string_view route, const json& request) {
  auto hash = canonical_hash(route, request);
  const auto* record = cassette_->find(hash);
  if (record == nullptr) throw ReplayMiss(std::move(hash), std::string(route));
  return {200, record->response};
}

std::string strip_stop(std::string text, const std::vector<std::string>& stop) {
  std::size_t cut = text.size();
  for (const auto& s : stop) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  text.resize(cut);
  return text;
}

json to_json(const GenerationRequest& request, std::string_view model) {
  return {{"model", model},
          {"prompt", request.prompt},
          {"max_new_tokens", request.max_new_tokens},
          {"temperature", request.temperature},
          {"stop", request.stop}};
}

AttentionResponse attention_from_json(const json& body) {
  AttentionResponse response;
  const auto heads = body.at("num_heads").get<std::size_t>();
  const bool causal = body.at("causal").get<bool>();
  for (const auto& tok : body.at("tokens")) {
    response.tokens.push_back({tok.at("text").get<std::string>(),
                               {tok.at("start").get<std::size_t>(), tok.at("end").get<std::size_t>()}});
  }
  const std::size_t t = response.tokens.size();
  const auto& weights = body.at("weights");
  if (weights.size() != heads) throw Error(ErrorKind::InvalidTensor, "weights do not have num_heads slices");
  std::vector<double> flat;
  flat.reserve(heads * t * t);
  for (const auto& head : weights) {
    if (head.size() != t) throw Error(ErrorKind::InvalidTensor, "head slice is not tokens x tokens");
    for (const auto& row : head) {
      if (row.size() != t) throw Error(ErrorKind::InvalidTensor, "head slice is not tokens x tokens");
      for (const auto& w : row) {
        if (!w.is_number()) throw Error(ErrorKind::InvalidTensor, "weight is not a number");
        flat.push_back(w.get<double>());
      }
    }
  }
  response.tensor = attention::AttentionTensor(heads, t, causal, std::move(flat));
  return response;
}

json to_json(const AttentionResponse& response) {
  const auto& tensor = response.tensor;
  json tokens = json::array();
  for (const auto& tok : response.tokens) {
    tokens.push_back({{"text", tok.text}, {"start", tok.range.begin}, {"end", tok.range.end}});
  }
  json weights = json::array();
  for (std::size_t h = 0; h < tensor.heads(); ++h) {
    json head = json::array();
    for (std::size_t i = 0; i < tensor.tokens(); ++i) {
      const auto row = tensor.row(h, i);
      head.push_back(json(std::vector<double>(row.begin(), row.end())));
    }
    weights.push_back(std::move(head));
  }
  return {{"tokens", std::move(tokens)},
          {"num_heads", tensor.heads()},
          {"causal", tensor.causal()},
          {"weights", std::move(weights)}};
}

Client::Client(BackendConfig config, std::unique_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (config_.max_in_flight == 0) config_.max_in_flight = 1;
}

json Client::call(std::string_view route, const json& request) {
  {
    std::unique_lock lock(slots_mutex_);
    slots_cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    Client* self;
    ~Release() {
      {
        std::lock_guard lock(self->slots_mutex_);
        --self->in_flight_;
      }
      self->slots_cv_.notify_one();
    }
  } release{this};

  auto reply = transport_->post(route, request);
  if (reply.status == 200) return std::move(reply.body);

  const auto& error = reply.body.is_object() && reply.body.contains("error") ? reply.body["error"] : json();
  if (error.is_object() && error.value("type", "") == "context_length_exceeded") {
    throw ContextLengthExceeded(error.value("limit", std::size_t{0}), error.value("requested", std::size_t{0}));
  }
  std::string message = error.is_object() ? error.value("message", "") : std::string();
  protocol_error(route, "HTTP " + std::to_string(reply.status) + (message.empty() ? "" : ": " + message));
}

std::string Client::generate(const GenerationRequest& request) {
  if (request.prompt.empty()) throw Error(ErrorKind::InvalidArgument, "empty prompt");
  auto body = call(kGenerateRoute, to_json(request, config_.model_name));
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
    protocol_error(kGenerateRoute, "reply lacks a string 'text'");
  }
  return strip_stop(body["text"].get<std::string>(), request.stop);
}

std::vector<std::vector<float>> Client::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  for (const auto& t : texts) {
    if (t.empty()) throw Error(ErrorKind::InvalidArgument, "cannot embed an empty text");
  }
  auto body = call(kEmbedRoute, json{{"model", config_.model_name}, {"texts", texts}});
  std::vector<std::vector<float>> out;
  try {
    out = body.at("embeddings").get<std::vector<std::vector<float>>>();
  } catch (const json::exception&) {
    protocol_error(kEmbedRoute, "reply lacks numeric 'embeddings'");
  }
  if (out.size() != texts.size()) {
    protocol_error(kEmbedRoute, "expected " + std::to_string(texts.size()) + " vectors, got " + std::to_string(out.size()));
  }
  for (const auto& v : out) {
    if (v.empty() || v.size() != out.front().size()) protocol_error(kEmbedRoute, "inconsistent embedding dimensions");
    for (float x : v) {
      if (!std::isfinite(x)) protocol_error(kEmbedRoute, "non-finite embedding value");
    }
  }
  return out;
}

AttentionResponse Client::attention(const std::string& text) {
  if (text.empty()) throw Error(ErrorKind::InvalidArgument, "empty attention input");
  if (config_.max_attention_bytes > 0 && text.size() > config_.max_attention_bytes) {
    throw ContextLengthExceeded(config_.max_attention_bytes, text.size());
  }
  auto body = call(kAttentionRoute, json{{"model", config_.model_name}, {"text", text}});
  AttentionResponse response;
  try {
    response = attention_from_json(body);
  } catch (const json::exception& e) {
    protocol_error(kAttentionRoute, std::string("malformed reply: ") + e.what());
  }
  response.validate(text.size());
  return response;
}

Reply RoutingTransport::post(std::string_view route, const json& request) {
  const auto it = routes_.find(route);
  return (it == routes_.end() ? fallback_ : it->second)->post(route, request);
}

namespace {

std::unique_ptr<Transport> live_transport(const BackendConfig& config, const std::string& endpoint) {
  if (endpoint == kToyEndpoint) return std::make_unique<ToyTransport>();
  BackendConfig routed = config;
  routed.endpoint = endpoint;
  return std::make_unique<HttpTransport>(routed);
}

}  // namespace

std::unique_ptr<Transport> make_transport(const BackendConfig& config) {
  if (config.mode == Mode::Replay) {
    if (config.cassette.empty()) throw Error(ErrorKind::Config, "replay mode needs a cassette");
    return std::make_unique<ReplayTransport>(std::make_shared<const Cassette>(Cassette::load(config.cassette)));
  }
  auto live = live_transport(config, config.endpoint);
  if (!config.route_endpoints.empty()) {
    std::map<std::string, std::unique_ptr<Transport>, std::less<>> routes;
    for (const auto& [route, endpoint] : config.route_endpoints) {
      if (route != kGenerateRoute && route != kEmbedRoute && route != kAttentionRoute) {
        throw Error(ErrorKind::Config, "unknown route '" + route + "'");
      }
      routes.emplace(route, live_transport(config, endpoint));
    }
    live = std::make_unique<RoutingTransport>(std::move(live), std::move(routes));
  }
  if (config.mode == Mode::Live) return live;
  if (config.cassette.empty()) throw Error(ErrorKind::Config, "record mode needs a cassette");
  auto cassette = std::make_shared<Cassette>(std::filesystem::exists(config.cassette)
                                                 ? Cassette::load(config.cassette)
                                                 : Cassette());
  cassette->attach(config.cassette);
  return std::make_unique<RecordingTransport>(std::move(live), std::move(cassette));
}

std::unique_ptr<Client> make_client(const BackendConfig& config) {
  return std::make_unique<Client>(config, make_transport(config));
}

}  // namespace cap::backend
