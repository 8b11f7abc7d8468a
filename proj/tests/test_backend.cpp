#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "cap/backend.hpp"
#include "cap/error.hpp"
#include "cap/reference_server.hpp"
#include "cap/toy_model.hpp"
#include "httplib.h"

namespace cap::backend {
namespace {

using nlohmann::json;

// Transport returning a fixed body for every route.
class FixedTransport : public Transport {
 public:
  explicit FixedTransport(Reply reply) : reply_(std::move(reply)) {}
  Reply post(std::string_view, const json&) override {
    ++calls;
    return reply_;
  }
  std::size_t calls = 0;

 private:
  Reply reply_;
};

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cap_backend_tests";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

BackendConfig config_for(Mode mode, std::filesystem::path cassette = {}, std::string endpoint = "toy:") {
  BackendConfig c;
  c.mode = mode;
  c.cassette = std::move(cassette);
  c.endpoint = std::move(endpoint);
  c.backoff = std::chrono::milliseconds(1);
  return c;
}

TEST(CanonicalHash, FieldOrderDoesNotMatter) {
  const auto a = json::parse(R"({"model":"m","prompt":"p","stop":["\n"],"temperature":0.0})");
  const auto b = json::parse(R"({"temperature":0.0,"stop":["\n"],"prompt":"p","model":"m"})");
  EXPECT_EQ(canonical_hash("/generate", a), canonical_hash("/generate", b));
  EXPECT_NE(canonical_hash("/generate", a), canonical_hash("/embed", a));
  EXPECT_EQ(canonical_hash("/generate", a).size(), 64u);
}

TEST(Replay, RecordedCompletionIsReplayed) {
  const auto path = temp_path("bonjour.jsonl");
  {
    auto cassette = std::make_shared<Cassette>();
    cassette->attach(path);
    Client recorder(config_for(Mode::Record, path),
                    std::make_unique<RecordingTransport>(
                        std::make_unique<FixedTransport>(Reply{200, {{"text", "bonjour"}}}), cassette));
    EXPECT_EQ(recorder.generate({"p"}), "bonjour");
  }
  auto client = make_client(config_for(Mode::Replay, path));
  EXPECT_EQ(client->generate({"p"}), "bonjour");
  try {
    client->generate({"unknown"});
    FAIL();
  } catch (const ReplayMiss& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ReplayMiss);
    EXPECT_EQ(e.hash(), canonical_hash("/generate", to_json(GenerationRequest{"unknown"}, "default")));
  }
}

TEST(Generate, StopSequencesAreStripped) {
  Client client(config_for(Mode::Live), std::make_unique<FixedTransport>(Reply{200, {{"text", "hi\nextra"}}}));
  GenerationRequest req{"p"};
  req.stop = {"\n"};
  EXPECT_EQ(client.generate(req), "hi");
  EXPECT_EQ(strip_stop("abXcdY", {"Y", "X"}), "ab");
}

TEST(Generate, ErrorsMapToKinds) {
  Client bad_status(config_for(Mode::Live), std::make_unique<FixedTransport>(Reply{500, {}}));
  try {
    bad_status.generate({"p"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendProtocol);
  }
  Client no_text(config_for(Mode::Live), std::make_unique<FixedTransport>(Reply{200, {{"txt", "x"}}}));
  EXPECT_THROW(no_text.generate({"p"}), Error);
}

TEST(Embed, EmptyBatchMakesNoCall) {
  auto transport = std::make_unique<FixedTransport>(Reply{200, {}});
  auto* raw = transport.get();
  Client client(config_for(Mode::Live), std::move(transport));
  EXPECT_TRUE(client.embed({}).empty());
  EXPECT_EQ(raw->calls, 0u);
}

TEST(Embed, ShapeContract) {
  auto client = make_client(config_for(Mode::Live));
  const auto v = client->embed({"a", "b"});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].size(), v[1].size());
  Client ragged(config_for(Mode::Live),
                std::make_unique<FixedTransport>(Reply{200, {{"embeddings", {{1.0, 2.0}, {1.0}}}}}));
  try {
    ragged.embed({"a", "b"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendProtocol);
  }
}

TEST(Embed, BatchInvariant) {
  auto client = make_client(config_for(Mode::Live));
  std::vector<std::string> texts;
  for (int i = 0; i < 64; ++i) texts.push_back("Satz Nummer " + std::to_string(i) + " mit Wörtern");
  const auto whole = client->embed(texts);
  auto first = client->embed(std::vector(texts.begin(), texts.begin() + 32));
  const auto second = client->embed(std::vector(texts.begin() + 32, texts.end()));
  first.insert(first.end(), second.begin(), second.end());
  EXPECT_EQ(whole, first);
}

json uniform_causal(std::size_t n) {
  json tokens = json::array();
  json rows = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    tokens.push_back({{"text", std::string(1, static_cast<char>('a' + i))}, {"start", i}, {"end", i + 1}});
    std::vector<double> row(n, 0.0);
    for (std::size_t j = 0; j <= i; ++j) row[j] = 1.0 / static_cast<double>(i + 1);
    rows.push_back(row);
  }
  return {{"tokens", tokens}, {"num_heads", 1}, {"causal", true}, {"weights", json::array({rows})}};
}

TEST(Attention, UniformCausalAccepted) {
  Client client(config_for(Mode::Live), std::make_unique<FixedTransport>(Reply{200, uniform_causal(4)}));
  const auto r = client.attention("abcd");
  EXPECT_EQ(r.tokens.size(), 4u);
  EXPECT_NEAR(r.tensor.at(0, 2, 1), 1.0 / 3.0, 1e-12);
}

TEST(Attention, HalfRowRejected) {
  auto body = uniform_causal(2);
  body["weights"][0][1] = {0.25, 0.25};
  Client client(config_for(Mode::Live), std::make_unique<FixedTransport>(Reply{200, body}));
  try {
    client.attention("ab");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidTensor);
  }
}

TEST(Attention, RangesMustFitAndAscend) {
  auto body = uniform_causal(2);
  body["tokens"][1]["start"] = 0;
  Client overlapping(config_for(Mode::Live), std::make_unique<FixedTransport>(Reply{200, body}));
  EXPECT_THROW(overlapping.attention("ab"), Error);
  Client too_long(config_for(Mode::Live), std::make_unique<FixedTransport>(Reply{200, uniform_causal(3)}));
  EXPECT_THROW(too_long.attention("ab"), Error);
}

TEST(Attention, OverLengthCarriesLimit) {
  ToyModelOptions options;
  options.max_input_bytes = 10;
  Client client(config_for(Mode::Live), std::make_unique<ToyTransport>(options));
  try {
    client.attention("this input is longer than ten bytes");
    FAIL();
  } catch (const ContextLengthExceeded& e) {
    EXPECT_EQ(e.limit(), 10u);
  }
}

TEST(Attention, ToyResponseReconstructsInput) {
  auto client = make_client(config_for(Mode::Live));
  const std::string text = "Der Hund schläft. Er träumt, glaube ich.";
  const auto r = client->attention(text);
  EXPECT_EQ(r.tokens[0].range.size(), 0u);
  for (const auto& t : r.tokens) {
    if (!t.range.empty()) EXPECT_EQ(text.substr(t.range.begin, t.range.size()), t.text);
  }
}

TEST(Attention, ReplayIsByteIdentical) {
  const auto path = temp_path("attention.jsonl");
  const std::string text = "Eins zwei. Drei vier.";
  json live;
  {
    auto recorder = make_client(config_for(Mode::Record, path));
    live = to_json(recorder->attention(text));
  }
  auto replay = make_client(config_for(Mode::Replay, path));
  EXPECT_EQ(to_json(replay->attention(text)).dump(), live.dump());
}

TEST(Replay, PerformsNoNetworkOperations) {
  const auto path = temp_path("hermetic.jsonl");
  {
    auto recorder = make_client(config_for(Mode::Record, path));
    recorder->generate({"p"});
    recorder->embed({"x"});
  }
  const auto before = network_operations();
  auto client = make_client(config_for(Mode::Replay, path, "http://127.0.0.1:9"));
  client->generate({"p"});
  client->embed({"x"});
  EXPECT_EQ(network_operations(), before);
}

TEST(Cassette, DuplicatesAreStoredOnce) {
  const auto path = temp_path("dups.jsonl");
  auto recorder = make_client(config_for(Mode::Record, path));
  recorder->generate({"same"});
  recorder->generate({"same"});
  EXPECT_EQ(Cassette::load(path).size(), 1u);
}

TEST(Client, InFlightCapIsRespected) {
  class SlowTransport : public Transport {
   public:
    Reply post(std::string_view, const json&) override {
      const int now = ++active;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
      return {200, {{"text", "x"}}};
    }
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
  };
  auto transport = std::make_unique<SlowTransport>();
  auto* raw = transport.get();
  auto cfg = config_for(Mode::Live);
  cfg.max_in_flight = 2;
  Client client(cfg, std::move(transport));
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) threads.emplace_back([&] { client.generate({"p"}); });
  for (auto& t : threads) t.join();
  EXPECT_LE(raw->peak.load(), 2);
}

TEST(Http, ReferenceServerMatchesToyModel) {
  ReferenceServer server;
  server.start();
  auto client = make_client(config_for(Mode::Live, {}, server.url()));
  auto toy = make_client(config_for(Mode::Live));
  const auto before = network_operations();
  GenerationRequest req{"German: Der Hund schläft.\nEnglish:"};
  EXPECT_EQ(client->generate(req), toy->generate(req));
  EXPECT_EQ(client->embed({"Hund"}), toy->embed({"Hund"}));
  EXPECT_EQ(to_json(client->attention("Ein Satz. Noch einer.")).dump(), to_json(toy->attention("Ein Satz. Noch einer.")).dump());
  EXPECT_EQ(network_operations() - before, 3u);
  EXPECT_EQ(server.requests(), 3u);
  server.stop();
}

TEST(Http, RouteOverrideSendsEmbedElsewhere) {
  ReferenceServer main_server, embed_server;
  main_server.start();
  embed_server.start();
  auto cfg = config_for(Mode::Live, {}, main_server.url());
  cfg.route_endpoints["/embed"] = embed_server.url();
  auto client = make_client(cfg);
  client->generate({"x"});
  client->embed({"x"});
  EXPECT_EQ(main_server.requests(), 1u);
  EXPECT_EQ(embed_server.requests(), 1u);
}

TEST(Http, RetriesServerErrorsThenSucceeds) {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/generate", [&](const httplib::Request&, httplib::Response& res) {
    if (++hits < 3) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"text":"ok"})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  auto cfg = config_for(Mode::Live, {}, "http://127.0.0.1:" + std::to_string(port));
  cfg.retries = 2;
  EXPECT_EQ(make_client(cfg)->generate({"p"}), "ok");
  EXPECT_EQ(hits.load(), 3);
  server.stop();
  thread.join();
}

TEST(Http, SlowServerTimesOut) {
  httplib::Server server;
  server.Post("/generate", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(R"({"text":"late"})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  auto cfg = config_for(Mode::Live, {}, "http://127.0.0.1:" + std::to_string(port));
  cfg.timeout = std::chrono::milliseconds(100);
  cfg.retries = 0;
  try {
    make_client(cfg)->generate({"p"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendTimeout);
  }
  server.stop();
  thread.join();
}

}  // namespace
}  // namespace cap::backend
