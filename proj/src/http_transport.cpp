#include <atomic>
#include <thread>

#include "cap/backend.hpp"
#include "cap/error.hpp"
#include "httplib.h"

namespace cap::backend {

namespace {

std::atomic<std::uint64_t> g_network_operations{0};

bool is_timeout(httplib::Error error) {
  return error == httplib::Error::Read || error == httplib::Error::Write ||
         error == httplib::Error::ConnectionTimeout;
}

}  // namespace

std::uint64_t network_operations() { return g_network_operations.load(); }

HttpTransport::HttpTransport(const BackendConfig& config)
    : timeout_(config.timeout), retries_(config.retries), backoff_(config.backoff) {
  const auto scheme_end = config.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::Config, "endpoint '" + config.endpoint + "' is not an http(s) URL");
  }
  const auto path_start = config.endpoint.find('/', scheme_end + 3);
  origin_ = config.endpoint.substr(0, path_start);
  if (path_start != std::string::npos) {
    path_prefix_ = config.endpoint.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
}

Reply HttpTransport::post(std::string_view route, const nlohmann::json& request) {
  const std::string path = path_prefix_ + std::string(route);
  const std::string payload = request.dump();
  auto delay = backoff_;
  for (std::size_t attempt = 0;; ++attempt) {
    httplib::Client client(origin_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    ++g_network_operations;
    auto result = client.Post(path, payload, "application/json");
    const bool last = attempt >= retries_;
    if (!result) {
      if (last) {
        const auto kind = is_timeout(result.error()) ? ErrorKind::BackendTimeout : ErrorKind::BackendProtocol;
        throw Error(kind, std::string(route) + ": " + httplib::to_string(result.error()));
      }
    } else if (result->status < 500 || last) {
      Reply reply;
      reply.status = result->status;
      try {
        reply.body = nlohmann::json::parse(result->body);
      } catch (const nlohmann::json::parse_error&) {
        if (reply.status == 200) {
          throw Error(ErrorKind::BackendProtocol, std::string(route) + ": reply is not JSON");
        }
      }
      return reply;
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

}  // namespace cap::backend
