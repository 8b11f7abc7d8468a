#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cap/attention.hpp"
#include "cap/capabilities.hpp"
#include "cap/corpus.hpp"
#include "cap/datastore.hpp"

namespace cap::prompting {

inline constexpr std::size_t kDefaultDemonstrations = 3;
inline constexpr std::size_t kMaxDemonstrations = 16;
inline constexpr std::size_t kSummaryMaxNewTokens = 128;

enum class OriginKind { Datastore, Precedent, None };

// Where a demonstration came from: a datastore entry id or the index of an
// earlier sentence of the same document.
struct Origin {
  OriginKind kind = OriginKind::None;
  std::uint64_t ref = 0;

  friend bool operator==(const Origin&, const Origin&) = default;
};

struct Demonstration {
  std::string src;
  std::string tgt;
  Origin origin;

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

struct Summary {
  std::string text;
  std::vector<std::size_t> source_sentence_indices;
};

// Blocks use the placeholders {src_lang}, {tgt_lang}, {src} and {tgt}.
// Substitution is single-pass, so placeholder-like text inside values is
// emitted verbatim.
struct PromptTemplate {
  std::string demo_block;
  std::string query_block;
  std::string joiner;

  static PromptTemplate standard();
  // Throws TemplateError naming the first missing or misplaced placeholder.
  void validate() const;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

// Template override files hold the demo block, the query block and the
// joiner, separated by lines consisting of `---`.
PromptTemplate parse_template(std::string_view text);
std::string serialize_template(const PromptTemplate& tmpl);

struct LanguagePair {
  std::string src;
  std::string tgt;
};

// English display name for common language codes; unknown codes are returned as given.
std::string language_name(std::string_view code);

// Demonstration blocks in order, then the query block, joined by the
// template joiner, with trailing whitespace removed. Newlines and
// backslashes inside values are escaped (\n, \\) so every block keeps its
// line structure.
std::string render_prompt(const PromptTemplate& tmpl, std::span<const Demonstration> demos,
                          std::string_view src, const LanguagePair& langs);

enum class StrategyKind { ZeroShot, Random, Bm25, Similar, Precedent, Cap };

struct Strategy {
  StrategyKind kind = StrategyKind::Cap;
  std::size_t k = kDefaultDemonstrations;
  std::uint64_t seed = 0;

  // Zero-shot always uses k = 0.
  static Strategy make(StrategyKind kind, std::size_t k = kDefaultDemonstrations, std::uint64_t seed = 0);
};

// Command-line spelling: zero-shot, random, bm25, similar, precedent, cap.
std::string_view strategy_name(StrategyKind kind);
// Report row label: Zero-shot, Random, BM25, Similar, Precedent, Ours.
std::string_view strategy_label(StrategyKind kind);
StrategyKind parse_strategy(std::string_view text);
std::vector<StrategyKind> all_strategies();

// The fixed instruction wrapped around the context to be summarized.
std::string summary_prompt(std::string_view context);

// Summarizes the window's sentences (in document order) with one greedy
// generate call. An empty window yields an empty summary without calling
// the backend.
Summary summarize_context(const attention::ContextWindow& window, const corpus::Document& doc,
                          Generator& generator);

// Source sentences of this document already translated by this run, in order.
class PrecedentState {
 public:
  struct Step {
    std::size_t sentence_index;
    std::string source;
    std::string output;
  };

  void push(std::size_t sentence_index, std::string source, std::string output);
  const std::vector<Step>& history() const { return history_; }
  void clear() { history_.clear(); }

 private:
  std::vector<Step> history_;
};

struct QueryContext {
  std::string_view source;
  std::size_t sentence_index = 0;
  const Summary* summary = nullptr;
  // Unit-norm embeddings of the source sentence and the summary, when the
  // strategy needs them.
  std::optional<std::vector<float>> source_embedding;
  std::optional<std::vector<float>> summary_embedding;
  // Mixed into the random strategy's seed so each sentence draws its own sample.
  std::uint64_t sample_key = 0;
};

struct DemoSelection {
  std::vector<Demonstration> demos;
  // CAP had no summary and retrieved with the source sentence instead.
  bool fell_back_to_similar = false;
};

DemoSelection select_demonstrations(const Strategy& strategy, const QueryContext& query,
                                    const datastore::DatastoreIndex* index, const PrecedentState& state);

// Seed derivation for per-sentence sampling.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

}  // namespace cap::prompting
