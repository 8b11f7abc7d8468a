#include "cap/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "cap/backend.hpp"
#include "cap/corpus.hpp"
#include "cap/datastore.hpp"
#include "cap/error.hpp"
#include "cap/eval.hpp"
#include "cap/pipeline.hpp"
#include "cap/prompting.hpp"
#include "cap/utf8.hpp"

namespace cap::cli {

namespace {

using nlohmann::json;

const std::map<std::string, std::string> kEnvBackedKeys = {
    {"backend-url", "CAP_BACKEND_URL"},
    {"backend-mode", "CAP_BACKEND_MODE"},
};

struct BackendOptions {
  std::string url = "http://127.0.0.1:8080";
  std::string mode = "live";
  std::string cassette;
  std::string model = "default";
  std::string embed_url;
  std::string attention_url;
  long timeout_ms = 60000;
  std::size_t retries = 2;
  std::size_t max_in_flight = 4;

  void add_to(CLI::App& app) {
    app.add_option("--backend-url", url, "Backend endpoint (http://host:port[/prefix] or toy:)")
        ->envname("CAP_BACKEND_URL")
        ->capture_default_str();
    app.add_option("--backend-mode", mode, "live, record or replay")
        ->envname("CAP_BACKEND_MODE")
        ->check(CLI::IsMember({"live", "record", "replay"}))
        ->capture_default_str();
    app.add_option("--embed-url", embed_url, "Separate endpoint for /embed");
    app.add_option("--attention-url", attention_url, "Separate endpoint for /attention");
    app.add_option("--cassette", cassette, "Record/replay cassette (JSON lines)");
    app.add_option("--model", model, "Model name sent with every request")->capture_default_str();
    app.add_option("--timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();
    app.add_option("--retries", retries, "Retries on timeouts and server errors")->capture_default_str();
    app.add_option("--max-in-flight", max_in_flight, "Concurrent backend requests")->capture_default_str();
  }

  backend::BackendConfig resolve() const {
    backend::BackendConfig cfg;
    cfg.endpoint = url;
    cfg.mode = backend::parse_mode(mode);
    cfg.cassette = cassette;
    cfg.model_name = model;
    cfg.timeout = std::chrono::milliseconds(timeout_ms);
    cfg.retries = retries;
    cfg.max_in_flight = max_in_flight;
    if (!embed_url.empty()) cfg.route_endpoints[std::string(backend::kEmbedRoute)] = embed_url;
    if (!attention_url.empty()) cfg.route_endpoints[std::string(backend::kAttentionRoute)] = attention_url;
    return cfg;
  }
};

struct RunOptions {
  std::string doc;
  bool raw = false;
  std::string index;
  std::size_t n_context = attention::kDefaultContextSize;
  std::size_t k = prompting::kDefaultDemonstrations;
  std::string score_mode = "max";
  std::string window = "dynamic";
  std::string attention_pass = "document";
  bool bidirectional = false;
  bool prepend_context = false;
  std::uint64_t seed = 0;
  std::string src_lang = "de";
  std::string tgt_lang = "en";
  std::string template_file;
  std::size_t max_new_tokens = 256;
  std::size_t jobs = 1;
  bool timing = false;

  void add_to(CLI::App& app) {
    app.add_option("--doc", doc, "Documents: one sentence per line, blank line between documents")->required();
    app.add_flag("--raw", raw, "Treat --doc as raw paragraphs and segment them");
    app.add_option("--index", index, "Datastore index file");
    app.add_option("--n-context", n_context, "Dynamic context size N")->capture_default_str();
    app.add_option("--k", k, "Demonstrations per prompt")->capture_default_str();
    app.add_option("--score-mode", score_mode, "Token-sentence aggregation: max or avg")
        ->check(CLI::IsMember({"max", "avg"}))
        ->capture_default_str();
    app.add_option("--window", window, "Context window: dynamic or fixed")
        ->check(CLI::IsMember({"dynamic", "fixed"}))
        ->capture_default_str();
    app.add_option("--attention-pass", attention_pass, "document or prefix")
        ->check(CLI::IsMember({"document", "prefix"}))
        ->capture_default_str();
    app.add_flag("--bidirectional", bidirectional, "Allow context after the current sentence");
    app.add_flag("--prepend-context", prepend_context, "Put the context sentences in the prompt");
    app.add_option("--seed", seed, "Seed for the random strategy")->capture_default_str();
    app.add_option("--src-lang", src_lang)->capture_default_str();
    app.add_option("--tgt-lang", tgt_lang)->capture_default_str();
    app.add_option("--template", template_file, "Prompt template override file");
    app.add_option("--max-new-tokens", max_new_tokens)->capture_default_str();
    app.add_option("--jobs", jobs, "Documents translated in parallel")->capture_default_str();
    app.add_flag("--timing", timing, "Include per-stage timings in records");
  }

  pipeline::RunConfig resolve(prompting::StrategyKind strategy, const BackendOptions& backend) const {
    pipeline::RunConfig cfg;
    cfg.strategy = strategy;
    cfg.n_context = n_context;
    cfg.k_demos = k;
    cfg.score_mode = score_mode == "avg" ? attention::ScoreMode::Avg : attention::ScoreMode::Max;
    cfg.window = window == "fixed" ? pipeline::WindowMode::Fixed : pipeline::WindowMode::Dynamic;
    cfg.attention_pass = attention_pass == "prefix" ? pipeline::AttentionPass::Prefix : pipeline::AttentionPass::Document;
    cfg.bidirectional = bidirectional;
    cfg.prepend_context = prepend_context;
    cfg.seed = seed;
    cfg.langs = {src_lang, tgt_lang};
    if (!template_file.empty()) cfg.prompt_template = prompting::parse_template(read_file(template_file));
    cfg.max_new_tokens = max_new_tokens;
    cfg.backend = backend.resolve();
    cfg.include_timing = timing;
    return cfg;
  }

  static std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Config, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, "cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Config, "cannot write " + path);
  return out;
}

std::vector<corpus::Document> load_documents(const std::string& path, bool raw, const std::string& lang) {
  auto in = open_input(path);
  auto docs = raw ? corpus::read_raw_documents(in, lang) : corpus::read_presegmented(in, lang);
  if (docs.empty()) throw Error(ErrorKind::EmptyDocument, path + " contains no documents");
  return docs;
}

std::optional<datastore::DatastoreIndex> load_index(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return datastore::DatastoreIndex::load(std::filesystem::path(path));
}

void announce(std::ostream& err, const json& config) {
  err << "cap: resolved config " << config.dump() << '\n';
}

// Reads flat `key = value` lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  auto in = open_input(path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto trimmed = std::string(utf8::trim(line));
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) throw CorpusFormatError(number, "config line lacks '='");
    auto key = std::string(utf8::trim(std::string_view(trimmed).substr(0, eq)));
    auto value = std::string(utf8::trim(std::string_view(trimmed).substr(eq + 1)));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

// Appends config-file values for flags not present on the command line.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  auto given = [&](const std::string& key) {
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--" + key || args[i].rfind("--" + key + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : read_config_file(config_path)) {
    if (key == "config" || given(key)) continue;
    if (auto env = kEnvBackedKeys.find(key); env != kEnvBackedKeys.end() && std::getenv(env->second.c_str())) continue;
    extra.push_back("--" + key + "=" + value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

int build_datastore(const std::string& pairs_path, const std::string& out_path, const std::string& src_lang,
                    const std::string& tgt_lang, double max_ratio, bool no_filter, bool no_normalize,
                    std::size_t batch_size, const BackendOptions& backend_opts, std::ostream& out, std::ostream& err) {
  const auto backend_cfg = backend_opts.resolve();
  announce(err, {{"command", "build-datastore"}, {"pairs", pairs_path}, {"src_lang", src_lang},
                 {"tgt_lang", tgt_lang}, {"max_ratio", max_ratio}, {"filter", !no_filter},
                 {"normalize", !no_normalize}, {"backend", backend::to_json(backend_cfg)}});
  auto in = open_input(pairs_path);
  auto pairs = corpus::read_parallel_tsv(in, src_lang, tgt_lang);
  const auto read = pairs.size();
  if (!no_normalize) {
    for (auto& p : pairs) {
      p.src = corpus::normalize_punctuation(p.src);
      p.tgt = corpus::normalize_punctuation(p.tgt);
    }
  }
  if (!no_filter) pairs = corpus::length_ratio_filter(pairs, max_ratio);
  auto client = backend::make_client(backend_cfg);
  const auto index = datastore::DatastoreIndex::build(pairs, *client, batch_size);
  index.save(std::filesystem::path(out_path));
  out << "indexed " << index.size() << " of " << read << " pairs (dim " << index.dim() << ") into " << out_path << '\n';
  return kExitOk;
}

int translate(const RunOptions& opts, const std::string& strategy, const std::string& out_path,
              const BackendOptions& backend_opts, std::ostream& out, std::ostream& err) {
  const auto cfg = opts.resolve(prompting::parse_strategy(strategy), backend_opts);
  cfg.validate();
  announce(err, cfg.to_json());
  const auto docs = load_documents(opts.doc, opts.raw, cfg.langs.src);
  const auto index = load_index(opts.index);
  auto client = backend::make_client(cfg.backend);
  pipeline::StrategyOutcome outcome{cfg.strategy, pipeline::translate_documents(docs, cfg, index ? &*index : nullptr, *client, opts.jobs), std::nullopt};
  auto file = open_output(out_path);
  pipeline::write_records(file, cfg.to_json(), {outcome}, cfg.include_timing);
  std::size_t failed = 0;
  std::size_t sentences = 0;
  for (const auto& doc : outcome.documents) {
    sentences += doc.records.size();
    if (doc.failed) {
      ++failed;
      err << "cap: " << doc.error << '\n';
    }
  }
  out << "translated " << sentences << " sentences in " << docs.size() << " documents";
  if (failed > 0) out << " (" << failed << " failed)";
  out << '\n';
  return failed > 0 ? kExitRuntime : kExitOk;
}

eval::DocumentSet load_references(const std::string& path, const std::string& lang) {
  auto in = open_input(path);
  eval::DocumentSet refs;
  for (const auto& doc : corpus::read_presegmented(in, lang, "ref")) {
    std::vector<std::string> sentences;
    for (const auto& s : doc.sentences) sentences.push_back(s.text);
    refs.push_back(std::move(sentences));
  }
  return refs;
}

std::vector<prompting::StrategyKind> parse_strategy_list(const std::string& list) {
  std::vector<prompting::StrategyKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto name = std::string(utf8::trim(item));
    if (!name.empty()) out.push_back(prompting::parse_strategy(name));
  }
  if (out.empty()) throw Error(ErrorKind::Config, "empty strategy list");
  return out;
}

int compare(const RunOptions& opts, const std::string& strategies, const std::string& refs_path,
            const std::string& records_out, const std::string& report_out, const std::string& table_out,
            const BackendOptions& backend_opts, std::ostream& out, std::ostream& err) {
  const auto kinds = parse_strategy_list(strategies);
  auto cfg = opts.resolve(kinds.front(), backend_opts);
  const auto docs = load_documents(opts.doc, opts.raw, cfg.langs.src);
  const auto index = load_index(opts.index);
  std::optional<eval::DocumentSet> refs;
  if (!refs_path.empty()) refs = load_references(refs_path, cfg.langs.tgt);
  auto client = backend::make_client(cfg.backend);
  const auto report = pipeline::run_comparison(docs, kinds, cfg, index ? &*index : nullptr, *client,
                                               refs ? &*refs : nullptr, opts.jobs);
  announce(err, report.config);
  if (!records_out.empty()) {
    auto file = open_output(records_out);
    pipeline::write_records(file, report.config, report.outcomes, cfg.include_timing);
  }
  const auto table = report.render_table();
  if (!report_out.empty()) open_output(report_out) << report.to_json().dump(2) << '\n';
  if (!table_out.empty()) open_output(table_out) << table;
  out << table;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    if (report.outcomes[i].error) err << "cap: " << *report.outcomes[i].error << '\n';
  }
  return kExitOk;
}

int evaluate(const std::string& records_path, const std::string& refs_path, const std::string& zpt_path,
             const std::string& out_path, std::string lang_pair, std::ostream& out, std::ostream& err) {
  auto in = open_input(records_path);
  const auto file = pipeline::read_records(in);
  if (file.records.empty()) throw Error(ErrorKind::EmptyEvalSet, records_path + " holds no records");
  std::string tgt_lang = "en";
  if (file.run_config.is_object()) {
    tgt_lang = file.run_config.value("tgt_lang", tgt_lang);
    if (lang_pair.empty() && file.run_config.contains("src_lang")) {
      lang_pair = file.run_config.value("src_lang", "") + "-" + tgt_lang;
    }
  }
  if (lang_pair.empty()) lang_pair = "src-" + tgt_lang;
  const auto refs = load_references(refs_path, tgt_lang);
  std::vector<eval::ZptAnnotation> annotations;
  if (!zpt_path.empty()) {
    auto zin = open_input(zpt_path);
    annotations = eval::read_zpt_annotations(zin);
  }

  eval::EvalReport report;
  report.config = {{"records", records_path}, {"refs", refs_path}, {"zpt", zpt_path},
                   {"lang_pair", lang_pair}, {"run", file.run_config}};
  announce(err, report.config);
  std::vector<prompting::StrategyKind> order;
  for (const auto& r : file.records) {
    if (std::find(order.begin(), order.end(), r.strategy) == order.end()) order.push_back(r.strategy);
  }
  for (auto kind : order) {
    std::vector<pipeline::TranslationRecord> subset;
    for (const auto& r : file.records) {
      if (r.strategy == kind) subset.push_back(r);
    }
    const auto hyps = pipeline::outputs_by_document(subset);
    eval::ReportRow row{std::string(prompting::strategy_label(kind)), lang_pair, {}};
    row.scores.d_bleu = eval::d_bleu(hyps, refs, tgt_lang);
    row.scores.chrf2 = eval::chrf2(hyps, refs);
    row.scores.documents = hyps.size();
    row.scores.sentences = subset.size();
    if (!annotations.empty()) {
      std::vector<std::string> outputs;
      for (const auto& r : subset) outputs.push_back(r.output);
      row.scores.zpt_accuracy = eval::zpt_accuracy(outputs, annotations);
    }
    report.rows.push_back(std::move(row));
  }
  if (!out_path.empty()) open_output(out_path) << report.to_json().dump(2) << '\n';
  out << report.render_table();
  return kExitOk;
}

int attention_dump(const RunOptions& opts, std::size_t doc_index, std::size_t sentence, const std::string& out_path,
                   const BackendOptions& backend_opts, std::ostream& out, std::ostream& err) {
  const auto cfg = opts.resolve(prompting::StrategyKind::Cap, backend_opts);
  announce(err, cfg.to_json());
  const auto docs = load_documents(opts.doc, opts.raw, cfg.langs.src);
  if (doc_index >= docs.size()) throw Error(ErrorKind::Config, "--doc-index out of range");
  const auto& doc = docs[doc_index];
  if (sentence >= doc.sentences.size()) throw Error(ErrorKind::Config, "--sentence out of range");

  const auto sentences = cfg.bidirectional ? std::span(doc.sentences) : std::span(doc.sentences).first(sentence + 1);
  const std::string text = doc.text.substr(0, sentences.back().range.end);
  auto client = backend::make_client(cfg.backend);
  const auto response = client->attention(text);
  std::vector<corpus::Span> ranges;
  json tokens = json::array();
  for (const auto& tok : response.tokens) {
    ranges.push_back(tok.range);
    tokens.push_back(tok.text);
  }
  const auto matrix = attention::average_heads(response.tensor);
  const auto map = attention::map_tokens(ranges, sentences);
  const auto scores = attention::sentence_attention(matrix, map, cfg.score_mode);

  json head_avg = json::array();
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const auto row = matrix.row(i);
    head_avg.push_back(std::vector<double>(row.begin(), row.end()));
  }
  json sentence_scores = json::array();
  for (std::size_t a = 0; a < scores.size(); ++a) {
    json row = json::array();
    for (std::size_t b = 0; b < scores.size(); ++b) {
      const auto s = scores.at(a, b);
      row.push_back(s ? json(*s) : json());
    }
    sentence_scores.push_back(std::move(row));
  }
  attention::SentenceAttentionMatrix candidates(scores.size(), scores.mode());
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (cfg.bidirectional || s < sentence) candidates.set(sentence, s, s == sentence ? std::nullopt : scores.at(sentence, s));
  }
  const auto window = attention::select_context(candidates, sentence, cfg.n_context);
  json token_sentence = json::array();
  for (const auto& s : map.token_to_sentence) token_sentence.push_back(s ? json(*s) : json());

  const json dump = {{"doc_id", doc.doc_id},
                     {"sentence", sentence},
                     {"tokens", std::move(tokens)},
                     {"token_sentence", std::move(token_sentence)},
                     {"num_heads", response.tensor.heads()},
                     {"causal", response.tensor.causal()},
                     {"score_mode", cfg.score_mode == attention::ScoreMode::Max ? "max" : "avg"},
                     {"head_avg", std::move(head_avg)},
                     {"sentence_scores", std::move(sentence_scores)},
                     {"context", window.members}};
  open_output(out_path) << dump.dump() << '\n';
  out << "wrote attention for " << response.tokens.size() << " tokens of " << doc.doc_id << " to " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-aware prompting toolkit for document-level machine translation", "cap"};
  app.require_subcommand(1);
  // Lets --config appear after the subcommand name as well.
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "Flat key = value file supplying defaults for flags");

  BackendOptions backend_opts;
  RunOptions run_opts;

  auto* build = app.add_subcommand("build-datastore", "Embed a parallel corpus into a datastore index");
  std::string pairs_path, index_out, src_lang = "de", tgt_lang = "en";
  double max_ratio = corpus::kDefaultMaxLengthRatio;
  bool no_filter = false, no_normalize = false;
  std::size_t batch_size = 64;
  build->add_option("--pairs", pairs_path, "Parallel corpus, src<TAB>tgt per line")->required();
  build->add_option("--out", index_out, "Index file to write")->required();
  build->add_option("--src-lang", src_lang)->capture_default_str();
  build->add_option("--tgt-lang", tgt_lang)->capture_default_str();
  build->add_option("--max-ratio", max_ratio, "Length-ratio filter threshold")->capture_default_str();
  build->add_flag("--no-filter", no_filter, "Keep pairs regardless of length ratio");
  build->add_flag("--no-normalize", no_normalize, "Skip punctuation normalization");
  build->add_option("--batch-size", batch_size)->capture_default_str();
  backend_opts.add_to(*build);

  auto* translate_cmd = app.add_subcommand("translate", "Translate documents with one strategy");
  std::string strategy = "cap", records_out;
  translate_cmd->add_option("--strategy", strategy, "zero-shot, random, bm25, similar, precedent or cap")
      ->capture_default_str();
  translate_cmd->add_option("--out", records_out, "Records (JSON lines)")->required();
  run_opts.add_to(*translate_cmd);
  backend_opts.add_to(*translate_cmd);

  auto* compare_cmd = app.add_subcommand("compare", "Run several strategies over the same documents");
  RunOptions compare_opts;
  std::string strategies = "zero-shot,random,bm25,similar,precedent,cap", refs_path, compare_records, report_out, table_out;
  compare_cmd->add_option("--strategies", strategies, "Comma-separated strategies")->capture_default_str();
  compare_cmd->add_option("--refs", refs_path, "Reference documents for d-BLEU/chrF2");
  compare_cmd->add_option("--records-out", compare_records, "Records of every strategy (JSON lines)");
  compare_cmd->add_option("--report-out", report_out, "Comparison report (JSON)");
  compare_cmd->add_option("--table-out", table_out, "Comparison table (text)");
  compare_opts.add_to(*compare_cmd);
  backend_opts.add_to(*compare_cmd);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score records against references");
  std::string eval_records, eval_refs, zpt_path, eval_out, lang_pair;
  evaluate_cmd->add_option("--records", eval_records, "Records (JSON lines)")->required();
  evaluate_cmd->add_option("--refs", eval_refs, "Reference documents, one sentence per line")->required();
  evaluate_cmd->add_option("--zpt", zpt_path, "Zero-pronoun annotations (JSON lines)");
  evaluate_cmd->add_option("--out", eval_out, "Report (JSON)");
  evaluate_cmd->add_option("--lang-pair", lang_pair, "Column label, e.g. de-en");

  auto* dump_cmd = app.add_subcommand("attention-dump", "Write head-averaged and sentence-level attention");
  RunOptions dump_opts;
  std::size_t doc_index = 0, sentence = 0;
  std::string dump_out;
  dump_cmd->add_option("--sentence", sentence, "Current sentence")->required();
  dump_cmd->add_option("--doc-index", doc_index, "Document within --doc")->capture_default_str();
  dump_cmd->add_option("--out", dump_out, "Output JSON")->required();
  dump_opts.add_to(*dump_cmd);
  backend_opts.add_to(*dump_cmd);

  std::vector<std::string> args;
  try {
    args = merge_config(raw_args);
  } catch (const std::exception& e) {
    err << "cap: " << e.what() << '\n';
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "cap: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*build) {
      return build_datastore(pairs_path, index_out, src_lang, tgt_lang, max_ratio, no_filter, no_normalize,
                             batch_size, backend_opts, out, err);
    }
    if (*translate_cmd) return translate(run_opts, strategy, records_out, backend_opts, out, err);
    if (*compare_cmd) {
      return compare(compare_opts, strategies, refs_path, compare_records, report_out, table_out, backend_opts, out, err);
    }
    if (*evaluate_cmd) return evaluate(eval_records, eval_refs, zpt_path, eval_out, lang_pair, out, err);
    if (*dump_cmd) return attention_dump(dump_opts, doc_index, sentence, dump_out, backend_opts, out, err);
  } catch (const Error& e) {
    err << "cap: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "cap: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cap::cli
