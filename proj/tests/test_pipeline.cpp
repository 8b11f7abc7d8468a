#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cap/backend.hpp"
#include "cap/error.hpp"
#include "cap/pipeline.hpp"
#include "cap/toy_model.hpp"
#include "oracles.hpp"

namespace cap::pipeline {
namespace {

using cap::testing::fixture;
using cap::testing::ScriptedBackend;
using nlohmann::json;
using prompting::StrategyKind;

struct AblationFixture {
  json data;
  corpus::Document doc;
  AttentionResponse response;
};

AblationFixture load_ablation() {
  std::ifstream in(fixture("ablation_attention.json"));
  AblationFixture f;
  f.data = json::parse(in);
  f.doc = corpus::document_from_sentences("ablation", "en", f.data["sentences"].get<std::vector<std::string>>());
  f.response = backend::attention_from_json(f.data["response"]);
  return f;
}

datastore::DatastoreIndex small_index(ScriptedBackend& embedder) {
  return datastore::DatastoreIndex::build({{"Aa bb.", "A b.", "en", "en"},
                                           {"Cc dd.", "C d.", "en", "en"},
                                           {"Ee ff.", "E f.", "en", "en"},
                                           {"Gg hh.", "G h.", "en", "en"}},
                                          embedder);
}

std::vector<std::size_t> last_context(const AblationFixture& f, attention::ScoreMode mode, WindowMode window) {
  ScriptedBackend backend;
  backend.on_attention = [&](const std::string& text) {
    EXPECT_EQ(text, f.doc.text);
    return f.response;
  };
  const auto index = small_index(backend);
  RunConfig cfg;
  cfg.strategy = StrategyKind::Cap;
  cfg.score_mode = mode;
  cfg.window = window;
  cfg.n_context = f.data["n_context"].get<std::size_t>();
  const auto result = translate_document(f.doc, cfg, &index, backend);
  EXPECT_FALSE(result.failed) << result.error;
  return *result.records.at(f.data["current"].get<std::size_t>()).context_members;
}

TEST(Ablation, MaxAvgAndFixedSelectDifferentMembers) {
  const auto f = load_ablation();
  const auto max = last_context(f, attention::ScoreMode::Max, WindowMode::Dynamic);
  const auto avg = last_context(f, attention::ScoreMode::Avg, WindowMode::Dynamic);
  const auto fixed = last_context(f, attention::ScoreMode::Max, WindowMode::Fixed);
  EXPECT_EQ(max, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(avg, (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(fixed, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(max, f.data["expected"]["max"].get<std::vector<std::size_t>>());
  EXPECT_EQ(avg, f.data["expected"]["avg"].get<std::vector<std::size_t>>());
}

TEST(Ablation, FixtureScoresMatchAggregation) {
  const auto f = load_ablation();
  std::vector<corpus::Span> ranges;
  for (const auto& t : f.response.tokens) ranges.push_back(t.range);
  const auto map = attention::map_tokens(ranges, f.doc.sentences);
  const auto m = attention::average_heads(f.response.tensor);
  for (auto [mode, key] : {std::pair{attention::ScoreMode::Max, "max"}, std::pair{attention::ScoreMode::Avg, "avg"}}) {
    const auto scores = attention::sentence_attention(m, map, mode);
    const auto expected = f.data["scores"][key].get<std::vector<double>>();
    for (std::size_t s = 0; s < expected.size(); ++s) EXPECT_NEAR(*scores.at(4, s), expected[s], 1e-12);
  }
}

TEST(Translate, SingleSentenceCapDocument) {
  ScriptedBackend backend;
  const auto index = small_index(backend);
  backend.embed_calls = 0;
  backend.on_attention = [](const std::string& text) {
    return backend::ToyModel().attention(text);
  };
  const auto doc = corpus::document_from_sentences("one", "de", {"Nur ein Satz."});
  const auto result = translate_document(doc, RunConfig{}, &index, backend);
  ASSERT_EQ(result.records.size(), 1u);
  const auto& r = result.records[0];
  EXPECT_TRUE(r.context_members->empty());
  EXPECT_FALSE(r.summary.has_value());
  EXPECT_TRUE(r.fell_back_to_similar);
  EXPECT_EQ(r.demonstrations.size(), 3u);
  EXPECT_EQ(backend.generate_calls, 1u);
  EXPECT_EQ(backend.embed_calls, 1u);
}

TEST(Translate, CapCallBudget) {
  ScriptedBackend backend;
  const auto index = small_index(backend);
  backend.embed_calls = 0;
  backend.on_attention = [](const std::string& text) { return backend::ToyModel().attention(text); };
  const auto doc = corpus::document_from_sentences("d", "de", {"Eins zwei.", "Drei vier.", "Fünf sechs.", "Sieben."});
  const auto result = translate_document(doc, RunConfig{}, &index, backend);
  ASSERT_FALSE(result.failed);
  EXPECT_EQ(backend.attention_calls, 1u);
  EXPECT_LE(backend.generate_calls, 2 * doc.sentences.size());
  EXPECT_EQ(backend.embed_calls, doc.sentences.size());
}

TEST(Translate, PrefixAndDocumentPassesAgreeForCausalBackend) {
  auto run = [](AttentionPass pass) {
    ScriptedBackend backend;
    const auto index = small_index(backend);
    backend.on_attention = [](const std::string& text) { return backend::ToyModel().attention(text); };
    RunConfig cfg;
    cfg.attention_pass = pass;
    const auto doc = corpus::document_from_sentences(
        "d", "de", {"Der Hund schläft.", "Die Katze spielt.", "Der Hund bellt laut.", "Es regnet.", "Der Hund."});
    const auto result = translate_document(doc, cfg, &index, backend);
    std::vector<std::vector<std::size_t>> members;
    for (const auto& r : result.records) members.push_back(*r.context_members);
    return std::pair{members, backend.attention_calls};
  };
  const auto [doc_members, doc_calls] = run(AttentionPass::Document);
  const auto [prefix_members, prefix_calls] = run(AttentionPass::Prefix);
  EXPECT_EQ(doc_members, prefix_members);
  EXPECT_EQ(doc_calls, 1u);
  EXPECT_GT(prefix_calls, 1u);
}

TEST(Translate, PartialFailureKeepsRecords) {
  ScriptedBackend backend;
  int calls = 0;
  backend.on_generate = [&](const GenerationRequest&) -> std::string {
    if (++calls == 3) throw Error(ErrorKind::BackendTimeout, "down");
    return "ok";
  };
  RunConfig cfg;
  cfg.strategy = StrategyKind::ZeroShot;
  const auto doc = corpus::document_from_sentences("d", "de", {"A.", "B.", "C.", "D."});
  const auto result = translate_document(doc, cfg, nullptr, backend);
  EXPECT_TRUE(result.failed);
  EXPECT_EQ(result.records.size(), 2u);
  EXPECT_NE(result.error.find("BackendTimeout"), std::string::npos);
}

TEST(Translate, PrecedentUsesOnlyEarlierOutputs) {
  ScriptedBackend backend;
  int n = 0;
  backend.on_generate = [&](const GenerationRequest&) { return "out" + std::to_string(n++); };
  RunConfig cfg;
  cfg.strategy = StrategyKind::Precedent;
  const auto doc = corpus::document_from_sentences("d", "de", {"A.", "B.", "C.", "D.", "E."});
  const auto result = translate_document(doc, cfg, nullptr, backend);
  for (const auto& r : result.records) {
    EXPECT_EQ(r.demonstrations.size(), std::min<std::size_t>(r.sentence_index, 3));
    for (const auto& d : r.demonstrations) {
      ASSERT_EQ(d.origin.kind, prompting::OriginKind::Precedent);
      ASSERT_LT(d.origin.ref, r.sentence_index);
      EXPECT_EQ(d.tgt, result.records[d.origin.ref].output);
    }
  }
}

TEST(Translate, FixedWindowOnlyForCap) {
  RunConfig cfg;
  cfg.strategy = StrategyKind::Bm25;
  cfg.window = WindowMode::Fixed;
  EXPECT_THROW(cfg.validate(), Error);
}

class ReplayFixture : public ::testing::Test {
 protected:
  std::vector<corpus::Document> docs;
  datastore::DatastoreIndex index = datastore::DatastoreIndex::load(fixture("index.jsonl"));
  RunConfig cfg;

  void SetUp() override {
    std::ifstream in(fixture("docs_de.txt"));
    docs = corpus::read_presegmented(in, "de");
    cfg.backend.mode = backend::Mode::Replay;
    cfg.backend.cassette = fixture("cassette.jsonl");
    cfg.backend.endpoint = "toy:";
  }
};

TEST_F(ReplayFixture, DeterministicRecords) {
  auto client = backend::make_client(cfg.backend);
  auto once = translate_documents(docs, cfg, &index, *client);
  auto twice = translate_documents(docs, cfg, &index, *client, 3);
  std::ostringstream a, b;
  write_records(a, cfg.to_json(), {{cfg.strategy, once, std::nullopt}});
  write_records(b, cfg.to_json(), {{cfg.strategy, twice, std::nullopt}});
  EXPECT_EQ(a.str(), b.str());
  for (const auto& d : once) EXPECT_FALSE(d.failed) << d.error;
}

TEST_F(ReplayFixture, ProvenanceResolvesAndFieldsMatchStrategy) {
  auto client = backend::make_client(cfg.backend);
  const auto report = run_comparison(docs, prompting::all_strategies(), cfg, &index, *client);
  std::vector<std::string> labels;
  for (const auto& row : report.rows) {
    labels.emplace_back(prompting::strategy_label(row.strategy));
    EXPECT_EQ(row.status, "ok");
  }
  EXPECT_EQ(labels, (std::vector<std::string>{"Zero-shot", "Random", "BM25", "Similar", "Precedent", "Ours"}));
  for (const auto& outcome : report.outcomes) {
    for (const auto& doc : outcome.documents) {
      for (const auto& r : doc.records) {
        const bool is_cap = r.strategy == StrategyKind::Cap;
        EXPECT_EQ(r.context_members.has_value(), is_cap);
        if (!is_cap) EXPECT_FALSE(r.summary.has_value());
        if (r.strategy == StrategyKind::ZeroShot) EXPECT_TRUE(r.demonstrations.empty());
        for (const auto& d : r.demonstrations) {
          if (d.origin.kind == prompting::OriginKind::Datastore) {
            ASSERT_NE(index.find(d.origin.ref), nullptr);
            EXPECT_EQ(index.find(d.origin.ref)->pair.src, d.src);
          } else {
            ASSERT_EQ(d.origin.kind, prompting::OriginKind::Precedent);
            EXPECT_LT(d.origin.ref, r.sentence_index);
          }
        }
        const auto j = r.to_json();
        EXPECT_EQ(j.contains("context_members"), is_cap);
        EXPECT_EQ(TranslationRecord::from_json(j).to_json(), j);
      }
    }
  }
}

TEST_F(ReplayFixture, SingletonAndFailureIsolation) {
  auto client = backend::make_client(cfg.backend);
  const auto one = run_comparison({docs[0]}, {StrategyKind::ZeroShot}, cfg, &index, *client);
  EXPECT_EQ(one.rows.size(), 1u);
  const auto isolated = run_comparison(docs, {StrategyKind::Bm25, StrategyKind::ZeroShot}, cfg, nullptr, *client);
  ASSERT_EQ(isolated.rows.size(), 2u);
  EXPECT_EQ(isolated.rows[0].status, "failed");
  EXPECT_EQ(isolated.rows[1].status, "ok");
}

TEST_F(ReplayFixture, ReportHasMetricsWithReferences) {
  std::ifstream in(fixture("refs_en.txt"));
  eval::DocumentSet refs;
  for (const auto& d : corpus::read_presegmented(in, "en")) {
    std::vector<std::string> s;
    for (const auto& x : d.sentences) s.push_back(x.text);
    refs.push_back(s);
  }
  auto client = backend::make_client(cfg.backend);
  const auto report = run_comparison(docs, {StrategyKind::ZeroShot, StrategyKind::Cap}, cfg, &index, *client, &refs);
  for (const auto& row : report.rows) {
    ASSERT_TRUE(row.d_bleu.has_value());
    EXPECT_GE(*row.d_bleu, 0.0);
    EXPECT_LE(*row.d_bleu, 100.0);
  }
  EXPECT_NE(report.render_table().find("de-en d-BLEU"), std::string::npos);
}

TEST(Records, RoundTripThroughJsonLines) {
  TranslationRecord r;
  r.doc_id = "d";
  r.sentence_index = 2;
  r.strategy = StrategyKind::Cap;
  r.source = "s";
  r.output = "o";
  r.demonstrations = {{"a", "b", {prompting::OriginKind::Datastore, 7}}, {"c", "d", {prompting::OriginKind::Precedent, 1}}};
  r.context_members = std::vector<std::size_t>{0, 1};
  r.summary = "sum";
  DocumentResult doc{"d", 3, {r}, true, "boom"};
  std::stringstream buffer;
  write_records(buffer, {{"seed", 1}}, {{StrategyKind::Cap, {doc}, std::nullopt}});
  const auto file = read_records(buffer);
  EXPECT_EQ(file.run_config["seed"], 1);
  ASSERT_EQ(file.records.size(), 1u);
  EXPECT_EQ(file.records[0].to_json(), r.to_json());
  EXPECT_EQ(file.failures.size(), 1u);
}

}  // namespace
}  // namespace cap::pipeline
