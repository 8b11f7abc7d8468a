#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "cap/reference_server.hpp"

namespace {
cap::backend::ReferenceServer* g_server = nullptr;
}

int main(int argc, char** argv) {
  CLI::App app{"Deterministic toy backend implementing /generate, /embed and /attention", "cap-reference-server"};
  std::string host = "127.0.0.1";
  int port = 8080;
  cap::backend::ToyModelOptions options;
  app.add_option("--host", host)->capture_default_str();
  app.add_option("--port", port)->capture_default_str();
  app.add_option("--embedding-dim", options.embedding_dim)->capture_default_str();
  app.add_option("--heads", options.heads)->capture_default_str();
  app.add_option("--max-input-bytes", options.max_input_bytes, "Longer /attention inputs get a 413")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  cap::backend::ReferenceServer server(options);
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  std::cerr << "cap-reference-server: listening on http://" << host << ":" << port << '\n';
  if (!server.listen(host, port)) {
    std::cerr << "cap-reference-server: cannot listen on " << host << ":" << port << '\n';
    return 2;
  }
  return 0;
}
