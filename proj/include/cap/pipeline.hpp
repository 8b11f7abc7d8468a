#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cap/attention.hpp"
#include "cap/backend.hpp"
#include "cap/capabilities.hpp"
#include "cap/corpus.hpp"
#include "cap/datastore.hpp"
#include "cap/eval.hpp"
#include "cap/prompting.hpp"

namespace cap::pipeline {

enum class WindowMode { Dynamic, Fixed };

// Granularity of the attention pass for dynamic windows. Under causal
// attention a single pass over the whole document yields the same scores
// toward earlier sentences as a pass over each prefix.
enum class AttentionPass { Document, Prefix };

struct RunConfig {
  prompting::StrategyKind strategy = prompting::StrategyKind::Cap;
  std::size_t n_context = attention::kDefaultContextSize;
  std::size_t k_demos = prompting::kDefaultDemonstrations;
  attention::ScoreMode score_mode = attention::ScoreMode::Max;
  WindowMode window = WindowMode::Dynamic;
  AttentionPass attention_pass = AttentionPass::Document;
  // Allow context sentences after the current one (needs a backend that
  // returns full attention matrices).
  bool bidirectional = false;
  // Put the context sentences ahead of the demonstrations in the prompt.
  bool prepend_context = false;
  std::uint64_t seed = 0;
  prompting::LanguagePair langs{"de", "en"};
  prompting::PromptTemplate prompt_template = prompting::PromptTemplate::standard();
  std::size_t max_new_tokens = 256;
  backend::BackendConfig backend;
  bool include_timing = false;

  prompting::Strategy strategy_spec() const;
  // Throws ConfigError for illegal combinations.
  void validate() const;
  nlohmann::json to_json() const;
};

struct StageTimings {
  double attention_ms = 0.0;
  double summary_ms = 0.0;
  double retrieval_ms = 0.0;
  double generation_ms = 0.0;
};

struct TranslationRecord {
  std::string doc_id;
  std::size_t sentence_index = 0;
  prompting::StrategyKind strategy = prompting::StrategyKind::ZeroShot;
  std::string source;
  std::string output;
  std::vector<prompting::Demonstration> demonstrations;
  // Set only for CAP.
  std::optional<std::vector<std::size_t>> context_members;
  std::optional<std::string> summary;
  bool fell_back_to_similar = false;
  StageTimings timing;

  nlohmann::json to_json(bool include_timing = false) const;
  static TranslationRecord from_json(const nlohmann::json& j);
};

struct DocumentResult {
  std::string doc_id;
  std::size_t sentence_count = 0;
  std::vector<TranslationRecord> records;
  bool failed = false;
  std::string error;
};

// Translates sentence by sentence in document order. A backend failure stops
// the document; records produced before it are kept and the result is
// marked failed.
DocumentResult translate_document(const corpus::Document& doc, const RunConfig& cfg,
                                  const datastore::DatastoreIndex* index, Backend& backend);

// Documents are processed by up to `jobs` threads; results keep input order.
std::vector<DocumentResult> translate_documents(const std::vector<corpus::Document>& docs, const RunConfig& cfg,
                                                const datastore::DatastoreIndex* index, Backend& backend,
                                                std::size_t jobs = 1);

struct StrategyOutcome {
  prompting::StrategyKind strategy;
  std::vector<DocumentResult> documents;
  std::optional<std::string> error;
};

struct ComparisonRow {
  prompting::StrategyKind strategy;
  std::string status;  // ok, partial or failed
  std::size_t documents = 0;
  std::size_t sentences = 0;
  std::size_t failed_documents = 0;
  std::optional<double> d_bleu;
  std::optional<double> chrf2;
};

struct ComparisonReport {
  nlohmann::json config;
  std::string lang_pair;
  std::vector<ComparisonRow> rows;
  std::vector<StrategyOutcome> outcomes;

  nlohmann::json to_json() const;
  std::string render_table() const;
};

// Runs every strategy over all documents with the same seed and backend.
// A failing strategy is reported as such without stopping the others.
// Metrics are filled in when references are given.
ComparisonReport run_comparison(const std::vector<corpus::Document>& docs,
                                const std::vector<prompting::StrategyKind>& strategies, const RunConfig& cfg,
                                const datastore::DatastoreIndex* index, Backend& backend,
                                const eval::DocumentSet* references = nullptr, std::size_t jobs = 1);

// JSON lines: one {"kind":"run"} header carrying the resolved config, then
// one {"kind":"record"} line per sentence and one {"kind":"failure"} line
// per failed document.
void write_records(std::ostream& out, const nlohmann::json& run_config,
                   const std::vector<StrategyOutcome>& outcomes, bool include_timing = false);

struct RecordFile {
  nlohmann::json run_config;
  std::vector<TranslationRecord> records;
  std::vector<nlohmann::json> failures;
};

RecordFile read_records(std::istream& in);

// Outputs grouped per document, in record order.
eval::DocumentSet outputs_by_document(const std::vector<TranslationRecord>& records);

}  // namespace cap::pipeline
