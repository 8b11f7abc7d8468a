#pragma once

#include <memory>
#include <string>

#include "cap/toy_model.hpp"

namespace cap::backend {

// Serves ToyModel over HTTP on /generate, /embed and /attention. Used by
// `cap-reference-server` and by tests that exercise HttpTransport.
class ReferenceServer {
 public:
  explicit ReferenceServer(ToyModelOptions options = {});
  ~ReferenceServer();
  ReferenceServer(const ReferenceServer&) = delete;
  ReferenceServer& operator=(const ReferenceServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();
  std::string url() const;

  // Requests answered so far.
  std::size_t requests() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cap::backend
