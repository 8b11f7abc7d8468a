#include "cap/reference_server.hpp"

#include <atomic>
#include <thread>

#include "cap/error.hpp"
#include "httplib.h"

namespace cap::backend {

struct ReferenceServer::Impl {
  ToyModel model;
  httplib::Server server;
  std::thread thread;
  std::string host = "127.0.0.1";
  int port = 0;
  std::atomic<std::size_t> requests{0};

  explicit Impl(ToyModelOptions options) : model(options) {
    for (auto route : {kGenerateRoute, kEmbedRoute, kAttentionRoute}) {
      server.Post(std::string(route), [this, route](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        Reply reply;
        try {
          reply = model.handle(route, nlohmann::json::parse(req.body));
        } catch (const nlohmann::json::exception& e) {
          reply = {400, {{"error", {{"type", "bad_request"}, {"message", e.what()}}}}};
        } catch (const Error& e) {
          reply = {400, {{"error", {{"type", "bad_request"}, {"message", e.what()}}}}};
        }
        res.status = reply.status;
        res.set_content(reply.body.dump(), "application/json");
      });
    }
  }
};

ReferenceServer::ReferenceServer(ToyModelOptions options) : impl_(std::make_unique<Impl>(options)) {}

ReferenceServer::~ReferenceServer() { stop(); }

int ReferenceServer::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorKind::Config, "cannot bind " + host);
  impl_->port = port;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

bool ReferenceServer::listen(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  return impl_->server.listen(host, port);
}

void ReferenceServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string ReferenceServer::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

std::size_t ReferenceServer::requests() const { return impl_->requests.load(); }

}  // namespace cap::backend
