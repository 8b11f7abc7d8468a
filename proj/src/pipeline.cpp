#include "cap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <istream>
#include <thread>

#include "cap/error.hpp"
#include "cap/utf8.hpp"

namespace cap::pipeline {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string_view window_name(WindowMode mode) { return mode == WindowMode::Fixed ? "fixed" : "dynamic"; }

json origin_to_json(const prompting::Origin& origin) {
  switch (origin.kind) {
    case prompting::OriginKind::Datastore: return {{"kind", "datastore"}, {"id", origin.ref}};
    case prompting::OriginKind::Precedent: return {{"kind", "precedent"}, {"sentence", origin.ref}};
    case prompting::OriginKind::None: break;
  }
  return {{"kind", "none"}};
}

prompting::Origin origin_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "datastore") return {prompting::OriginKind::Datastore, j.at("id").get<std::uint64_t>()};
  if (kind == "precedent") return {prompting::OriginKind::Precedent, j.at("sentence").get<std::uint64_t>()};
  return {};
}

// Chooses the context window of each sentence of one document, running the
// attention pass lazily.
class ContextSelector {
 public:
  ContextSelector(const corpus::Document& doc, const RunConfig& cfg, AttentionSource& source)
      : doc_(doc), cfg_(cfg), source_(source) {}

  attention::ContextWindow window_for(std::size_t current, StageTimings& timing) {
    const std::size_t total = doc_.sentences.size();
    if (cfg_.window == WindowMode::Fixed) return attention::fixed_context(current, total);
    attention::ContextWindow empty{current, {}, cfg_.n_context};
    if (total == 1 || (!cfg_.bidirectional && current == 0)) return empty;

    const auto start = Clock::now();
    const attention::SentenceAttentionMatrix* scores = nullptr;
    std::optional<attention::SentenceAttentionMatrix> prefix_scores;
    if (cfg_.bidirectional || cfg_.attention_pass == AttentionPass::Document) {
      if (!document_scores_) document_scores_ = score(doc_.text, doc_.sentences);
      scores = &*document_scores_;
    } else {
      const auto end = doc_.sentences[current].range.end;
      prefix_scores = score(std::string_view(doc_.text).substr(0, end),
                            std::span(doc_.sentences).first(current + 1));
      scores = &*prefix_scores;
    }
    timing.attention_ms += elapsed_ms(start);

    if (cfg_.bidirectional) return attention::select_context(*scores, current, cfg_.n_context);
    attention::SentenceAttentionMatrix preceding(scores->size(), scores->mode());
    for (std::size_t s = 0; s < current; ++s) preceding.set(current, s, scores->at(current, s));
    return attention::select_context(preceding, current, cfg_.n_context);
  }

 private:
  attention::SentenceAttentionMatrix score(std::string_view text, std::span<const corpus::Sentence> sentences) {
    const std::string input(text);
    auto response = source_.attention(input);
    response.validate(input.size());
    std::vector<corpus::Span> ranges;
    ranges.reserve(response.tokens.size());
    for (const auto& tok : response.tokens) ranges.push_back(tok.range);
    const auto map = attention::map_tokens(ranges, sentences);
    return attention::sentence_attention(attention::average_heads(response.tensor), map, cfg_.score_mode);
  }

  const corpus::Document& doc_;
  const RunConfig& cfg_;
  AttentionSource& source_;
  std::optional<attention::SentenceAttentionMatrix> document_scores_;
};

std::vector<float> embed_one(Embedder& embedder, const std::string& text) {
  auto vectors = embedder.embed({text});
  if (vectors.size() != 1) throw Error(ErrorKind::BackendProtocol, "embed returned no vector");
  return datastore::l2_normalize(vectors.front());
}

}  // namespace

prompting::Strategy RunConfig::strategy_spec() const {
  return prompting::Strategy::make(strategy, k_demos, seed);
}

void RunConfig::validate() const {
  if (n_context == 0) throw Error(ErrorKind::Config, "n_context must be at least 1");
  if (k_demos > prompting::kMaxDemonstrations) {
    throw Error(ErrorKind::Config, "k_demos may not exceed " + std::to_string(prompting::kMaxDemonstrations));
  }
  if (window == WindowMode::Fixed && strategy != prompting::StrategyKind::Cap) {
    throw Error(ErrorKind::Config, "the fixed context window is an ablation of the cap strategy only");
  }
  if (max_new_tokens == 0) throw Error(ErrorKind::Config, "max_new_tokens must be positive");
  prompt_template.validate();
}

json RunConfig::to_json() const {
  return {{"strategy", prompting::strategy_name(strategy)},
          {"n_context", n_context},
          {"k_demos", strategy_spec().k},
          {"score_mode", score_mode == attention::ScoreMode::Max ? "max" : "avg"},
          {"window", window_name(window)},
          {"attention_pass", attention_pass == AttentionPass::Document ? "document" : "prefix"},
          {"bidirectional", bidirectional},
          {"prepend_context", prepend_context},
          {"seed", seed},
          {"src_lang", langs.src},
          {"tgt_lang", langs.tgt},
          {"max_new_tokens", max_new_tokens},
          {"template", {{"demo_block", prompt_template.demo_block},
                        {"query_block", prompt_template.query_block},
                        {"joiner", prompt_template.joiner}}},
          {"backend", backend::to_json(backend)}};
}

json TranslationRecord::to_json(bool include_timing) const {
  json demos = json::array();
  for (const auto& d : demonstrations) {
    demos.push_back({{"src", d.src}, {"tgt", d.tgt}, {"origin", origin_to_json(d.origin)}});
  }
  json j = {{"kind", "record"},
            {"doc_id", doc_id},
            {"sentence_index", sentence_index},
            {"strategy", prompting::strategy_name(strategy)},
            {"source", source},
            {"output", output},
            {"demonstrations", std::move(demos)}};
  if (context_members) j["context_members"] = *context_members;
  if (summary) j["summary"] = *summary;
  if (strategy == prompting::StrategyKind::Cap) j["fell_back_to_similar"] = fell_back_to_similar;
  if (include_timing) {
    j["timing"] = {{"attention_ms", timing.attention_ms},
                   {"summary_ms", timing.summary_ms},
                   {"retrieval_ms", timing.retrieval_ms},
                   {"generation_ms", timing.generation_ms}};
  }
  return j;
}

TranslationRecord TranslationRecord::from_json(const json& j) {
  TranslationRecord r;
  r.doc_id = j.at("doc_id").get<std::string>();
  r.sentence_index = j.at("sentence_index").get<std::size_t>();
  r.strategy = prompting::parse_strategy(j.at("strategy").get<std::string>());
  r.source = j.at("source").get<std::string>();
  r.output = j.at("output").get<std::string>();
  for (const auto& d : j.at("demonstrations")) {
    r.demonstrations.push_back({d.at("src").get<std::string>(), d.at("tgt").get<std::string>(),
                                origin_from_json(d.at("origin"))});
  }
  if (j.contains("context_members")) r.context_members = j["context_members"].get<std::vector<std::size_t>>();
  if (j.contains("summary")) r.summary = j["summary"].get<std::string>();
  r.fell_back_to_similar = j.value("fell_back_to_similar", false);
  if (j.contains("timing")) {
    const auto& t = j["timing"];
    r.timing = {t.value("attention_ms", 0.0), t.value("summary_ms", 0.0), t.value("retrieval_ms", 0.0),
                t.value("generation_ms", 0.0)};
  }
  return r;
}

DocumentResult translate_document(const corpus::Document& doc, const RunConfig& cfg,
                                  const datastore::DatastoreIndex* index, Backend& backend) {
  cfg.validate();
  DocumentResult result;
  result.doc_id = doc.doc_id;
  result.sentence_count = doc.sentences.size();

  const auto strategy = cfg.strategy_spec();
  const bool is_cap = strategy.kind == prompting::StrategyKind::Cap;
  const bool needs_source_embedding = strategy.kind == prompting::StrategyKind::Similar;
  ContextSelector selector(doc, cfg, backend);
  prompting::PrecedentState precedent;
  const std::uint64_t doc_key = fnv1a(doc.doc_id);

  try {
    for (const auto& sentence : doc.sentences) {
      TranslationRecord record;
      record.doc_id = doc.doc_id;
      record.sentence_index = sentence.index;
      record.strategy = strategy.kind;
      record.source = sentence.text;

      prompting::QueryContext query;
      query.source = sentence.text;
      query.sentence_index = sentence.index;
      query.sample_key = prompting::mix_seed(doc_key, sentence.index);

      prompting::Summary summary;
      attention::ContextWindow window;
      if (is_cap && strategy.k > 0) {
        window = selector.window_for(sentence.index, record.timing);
        record.context_members = window.members;
        const auto start = Clock::now();
        summary = prompting::summarize_context(window, doc, backend);
        record.timing.summary_ms = elapsed_ms(start);
        if (!summary.text.empty()) record.summary = summary.text;
        query.summary = &summary;
      } else if (is_cap) {
        window = selector.window_for(sentence.index, record.timing);
        record.context_members = window.members;
      }

      const auto retrieval_start = Clock::now();
      if (strategy.k > 0) {
        if (is_cap && !summary.text.empty()) {
          query.summary_embedding = embed_one(backend, summary.text);
        } else if (is_cap || needs_source_embedding) {
          query.source_embedding = embed_one(backend, sentence.text);
        }
      }
      auto selection = prompting::select_demonstrations(strategy, query, index, precedent);
      record.demonstrations = std::move(selection.demos);
      record.fell_back_to_similar = selection.fell_back_to_similar;
      record.timing.retrieval_ms = elapsed_ms(retrieval_start);

      std::string prompt;
      if (is_cap && cfg.prepend_context && !window.members.empty()) {
        prompt = "Context:";
        for (auto m : window.members) prompt += " " + doc.sentences[m].text;
        prompt += "\n\n";
      }
      prompt += prompting::render_prompt(cfg.prompt_template, record.demonstrations, sentence.text, cfg.langs);

      GenerationRequest request;
      request.prompt = std::move(prompt);
      request.max_new_tokens = cfg.max_new_tokens;
      request.temperature = 0.0;
      request.stop = {"\n"};
      const auto generation_start = Clock::now();
      record.output = std::string(utf8::trim(backend.generate(request)));
      record.timing.generation_ms = elapsed_ms(generation_start);

      precedent.push(sentence.index, sentence.text, record.output);
      result.records.push_back(std::move(record));
    }
  } catch (Error& e) {
    e.add_context("document " + doc.doc_id + ", sentence " + std::to_string(result.records.size()));
    result.failed = true;
    result.error = e.what();
  }
  return result;
}

std::vector<DocumentResult> translate_documents(const std::vector<corpus::Document>& docs, const RunConfig& cfg,
                                                const datastore::DatastoreIndex* index, Backend& backend,
                                                std::size_t jobs) {
  cfg.validate();
  std::vector<DocumentResult> results(docs.size());
  auto run = [&](std::size_t i) {
    try {
      results[i] = translate_document(docs[i], cfg, index, backend);
    } catch (const std::exception& e) {
      results[i].doc_id = docs[i].doc_id;
      results[i].sentence_count = docs[i].sentences.size();
      results[i].failed = true;
      results[i].error = e.what();
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(docs.size(), 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < docs.size(); ++i) run(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < docs.size(); i = next++) run(i);
    });
  }
  for (auto& t : workers) t.join();
  return results;
}

ComparisonReport run_comparison(const std::vector<corpus::Document>& docs,
                                const std::vector<prompting::StrategyKind>& strategies, const RunConfig& cfg,
                                const datastore::DatastoreIndex* index, Backend& backend,
                                const eval::DocumentSet* references, std::size_t jobs) {
  if (strategies.empty()) throw Error(ErrorKind::Config, "no strategies to compare");
  if (references != nullptr && references->size() != docs.size()) {
    throw Error(ErrorKind::Alignment, std::to_string(docs.size()) + " documents but " +
                                          std::to_string(references->size()) + " reference documents");
  }
  ComparisonReport report;
  report.config = cfg.to_json();
  report.config.erase("strategy");
  report.config["k_demos"] = cfg.k_demos;
  json names = json::array();
  for (auto s : strategies) names.push_back(prompting::strategy_name(s));
  report.config["strategies"] = std::move(names);
  report.lang_pair = cfg.langs.src + "-" + cfg.langs.tgt;

  for (auto kind : strategies) {
    StrategyOutcome outcome{kind, {}, std::nullopt};
    ComparisonRow row;
    row.strategy = kind;
    row.status = "ok";
    row.documents = docs.size();
    try {
      RunConfig run_cfg = cfg;
      run_cfg.strategy = kind;
      if (kind != prompting::StrategyKind::Cap) run_cfg.window = WindowMode::Dynamic;
      outcome.documents = translate_documents(docs, run_cfg, index, backend, jobs);
      for (const auto& doc : outcome.documents) {
        row.sentences += doc.records.size();
        if (doc.failed) ++row.failed_documents;
      }
      if (row.failed_documents == docs.size() && !docs.empty()) {
        row.status = "failed";
      } else if (row.failed_documents > 0) {
        row.status = "partial";
      } else if (references != nullptr && !docs.empty()) {
        eval::DocumentSet hyps;
        for (const auto& doc : outcome.documents) {
          std::vector<std::string> outputs;
          for (const auto& r : doc.records) outputs.push_back(r.output);
          hyps.push_back(std::move(outputs));
        }
        row.d_bleu = eval::d_bleu(hyps, *references, cfg.langs.tgt);
        row.chrf2 = eval::chrf2(hyps, *references);
      }
    } catch (const std::exception& e) {
      outcome.error = e.what();
      row.status = "failed";
    }
    report.rows.push_back(row);
    report.outcomes.push_back(std::move(outcome));
  }
  return report;
}

json ComparisonReport::to_json() const {
  json rows_json = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    json r = {{"strategy", prompting::strategy_label(row.strategy)},
              {"name", prompting::strategy_name(row.strategy)},
              {"status", row.status},
              {"documents", row.documents},
              {"sentences", row.sentences},
              {"failed_documents", row.failed_documents}};
    r["d_bleu"] = row.d_bleu ? json(*row.d_bleu) : json();
    r["chrf2"] = row.chrf2 ? json(*row.chrf2) : json();
    if (i < outcomes.size() && outcomes[i].error) r["error"] = *outcomes[i].error;
    rows_json.push_back(std::move(r));
  }
  return {{"kind", "comparison"}, {"config", config}, {"lang_pair", lang_pair}, {"rows", std::move(rows_json)}};
}

std::string ComparisonReport::render_table() const {
  std::vector<std::vector<std::string>> table{{"methods", lang_pair + " d-BLEU", lang_pair + " chrF2", "status"}};
  for (const auto& row : rows) {
    table.push_back({std::string(prompting::strategy_label(row.strategy)),
                     row.d_bleu ? eval::format_score(*row.d_bleu) : "-",
                     row.chrf2 ? eval::format_score(*row.chrf2) : "-", row.status});
  }
  return eval::render_text_table(table);
}

void write_records(std::ostream& out, const json& run_config, const std::vector<StrategyOutcome>& outcomes,
                   bool include_timing) {
  out << json{{"kind", "run"}, {"config", run_config}}.dump() << '\n';
  for (const auto& outcome : outcomes) {
    if (outcome.error) {
      out << json{{"kind", "failure"}, {"strategy", prompting::strategy_name(outcome.strategy)},
                  {"error", *outcome.error}}.dump()
          << '\n';
    }
    for (const auto& doc : outcome.documents) {
      for (const auto& record : doc.records) out << record.to_json(include_timing).dump() << '\n';
      if (doc.failed) {
        out << json{{"kind", "failure"}, {"strategy", prompting::strategy_name(outcome.strategy)},
                    {"doc_id", doc.doc_id}, {"completed_sentences", doc.records.size()},
                    {"total_sentences", doc.sentence_count}, {"error", doc.error}}.dump()
            << '\n';
      }
    }
  }
}

RecordFile read_records(std::istream& in) {
  RecordFile file;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (utf8::trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      const auto kind = j.value("kind", "record");
      if (kind == "run") {
        file.run_config = j.value("config", json::object());
      } else if (kind == "failure") {
        file.failures.push_back(std::move(j));
      } else {
        file.records.push_back(TranslationRecord::from_json(j));
      }
    } catch (const json::exception& e) {
      throw CorpusFormatError(number, std::string("bad record: ") + e.what());
    }
  }
  return file;
}

eval::DocumentSet outputs_by_document(const std::vector<TranslationRecord>& records) {
  eval::DocumentSet docs;
  std::vector<std::string> ids;
  for (const auto& r : records) {
    auto it = std::find(ids.begin(), ids.end(), r.doc_id);
    if (it == ids.end()) {
      ids.push_back(r.doc_id);
      docs.emplace_back();
      it = ids.end() - 1;
    }
    docs[static_cast<std::size_t>(it - ids.begin())].push_back(r.output);
  }
  return docs;
}

}  // namespace cap::pipeline
