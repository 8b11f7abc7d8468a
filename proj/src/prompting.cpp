#include "cap/prompting.hpp"

#include <algorithm>
#include <array>
#include <map>

#include "cap/error.hpp"
#include "cap/utf8.hpp"

namespace cap::prompting {

namespace {

constexpr std::string_view kTemplateSeparator = "\n---\n";

void escape_into(std::string& out, std::string_view value) {
  for (char c : value) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
}

struct Fields {
  std::string_view src_lang;
  std::string_view tgt_lang;
  std::string_view src;
  std::string_view tgt;
};

void substitute(std::string& out, std::string_view block, const Fields& fields) {
  for (std::size_t pos = 0; pos < block.size();) {
    if (block[pos] == '{') {
      const auto close = block.find('}', pos);
      if (close != std::string_view::npos) {
        const auto name = block.substr(pos + 1, close - pos - 1);
        const std::string_view* value = nullptr;
        if (name == "src_lang") value = &fields.src_lang;
        else if (name == "tgt_lang") value = &fields.tgt_lang;
        else if (name == "src") value = &fields.src;
        else if (name == "tgt") value = &fields.tgt;
        if (value != nullptr) {
          escape_into(out, *value);
          pos = close + 1;
          continue;
        }
      }
    }
    out += block[pos++];
  }
}

bool has_placeholder(std::string_view block, std::string_view name) {
  return block.find("{" + std::string(name) + "}") != std::string_view::npos;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<Demonstration> from_hits(const std::vector<datastore::Hit>& hits) {
  std::vector<Demonstration> out;
  out.reserve(hits.size());
  for (const auto& hit : hits) {
    out.push_back({hit.entry->pair.src, hit.entry->pair.tgt, {OriginKind::Datastore, hit.entry->id}});
  }
  return out;
}

const datastore::DatastoreIndex& require_index(const datastore::DatastoreIndex* index, StrategyKind kind) {
  if (index == nullptr) {
    throw Error(ErrorKind::InvalidArgument, std::string(strategy_name(kind)) + " strategy needs a datastore");
  }
  return *index;
}

const std::vector<float>& require_embedding(const std::optional<std::vector<float>>& e, std::string_view what) {
  if (!e) throw Error(ErrorKind::InvalidArgument, "missing " + std::string(what) + " embedding");
  return *e;
}

}  // namespace

PromptTemplate PromptTemplate::standard() {
  return {"{src_lang}: {src}\n{tgt_lang}: {tgt}\n\n", "{src_lang}: {src}\n{tgt_lang}:", ""};
}

void PromptTemplate::validate() const {
  for (auto name : {"src", "tgt"}) {
    if (!has_placeholder(demo_block, name)) {
      throw Error(ErrorKind::Template, std::string("demo block lacks placeholder {") + name + "}");
    }
  }
  if (!has_placeholder(query_block, "src")) {
    throw Error(ErrorKind::Template, "query block lacks placeholder {src}");
  }
  if (has_placeholder(query_block, "tgt")) {
    throw Error(ErrorKind::Template, "query block must not contain placeholder {tgt}");
  }
}

PromptTemplate parse_template(std::string_view text) {
  if (text.size() >= 1 && text.back() == '\n') text.remove_suffix(1);
  std::vector<std::string> sections;
  for (;;) {
    const auto sep = text.find(kTemplateSeparator);
    if (sep == std::string_view::npos) {
      sections.emplace_back(text);
      break;
    }
    sections.emplace_back(text.substr(0, sep));
    text.remove_prefix(sep + kTemplateSeparator.size());
  }
  if (sections.size() != 3) {
    throw Error(ErrorKind::Template, "template file needs 3 sections separated by '---' lines, found " +
                                         std::to_string(sections.size()));
  }
  PromptTemplate tmpl{sections[0], sections[1], sections[2]};
  tmpl.validate();
  return tmpl;
}

std::string serialize_template(const PromptTemplate& tmpl) {
  return tmpl.demo_block + std::string(kTemplateSeparator) + tmpl.query_block + std::string(kTemplateSeparator) +
         tmpl.joiner + "\n";
}

std::string language_name(std::string_view code) {
  static const std::map<std::string, std::string, std::less<>> names = {
      {"ar", "Arabic"}, {"cs", "Czech"},   {"de", "German"},   {"en", "English"}, {"es", "Spanish"},
      {"fr", "French"}, {"it", "Italian"}, {"ja", "Japanese"}, {"ko", "Korean"},  {"nl", "Dutch"},
      {"pl", "Polish"}, {"pt", "Portuguese"}, {"ru", "Russian"}, {"uk", "Ukrainian"}, {"zh", "Chinese"},
  };
  const auto primary = utf8::ascii_lower(code.substr(0, code.find_first_of("-_")));
  auto it = names.find(primary);
  return it == names.end() ? std::string(code) : it->second;
}

std::string render_prompt(const PromptTemplate& tmpl, std::span<const Demonstration> demos,
                          std::string_view src, const LanguagePair& langs) {
  tmpl.validate();
  if (demos.size() > kMaxDemonstrations) {
    throw Error(ErrorKind::InvalidArgument, std::to_string(demos.size()) + " demonstrations exceed the cap of " +
                                                std::to_string(kMaxDemonstrations));
  }
  const auto src_name = language_name(langs.src);
  const auto tgt_name = language_name(langs.tgt);
  std::string out;
  for (const auto& demo : demos) {
    substitute(out, tmpl.demo_block, {src_name, tgt_name, demo.src, demo.tgt});
    out += tmpl.joiner;
  }
  substitute(out, tmpl.query_block, {src_name, tgt_name, src, {}});
  while (!out.empty() && (out.back() == ' ' || out.back() == '\n' || out.back() == '\t' || out.back() == '\r')) {
    out.pop_back();
  }
  return out;
}

Strategy Strategy::make(StrategyKind kind, std::size_t k, std::uint64_t seed) {
  return {kind, kind == StrategyKind::ZeroShot ? 0 : k, seed};
}

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::ZeroShot: return "zero-shot";
    case StrategyKind::Random: return "random";
    case StrategyKind::Bm25: return "bm25";
    case StrategyKind::Similar: return "similar";
    case StrategyKind::Precedent: return "precedent";
    case StrategyKind::Cap: return "cap";
  }
  return "cap";
}

std::string_view strategy_label(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::ZeroShot: return "Zero-shot";
    case StrategyKind::Random: return "Random";
    case StrategyKind::Bm25: return "BM25";
    case StrategyKind::Similar: return "Similar";
    case StrategyKind::Precedent: return "Precedent";
    case StrategyKind::Cap: return "Ours";
  }
  return "Ours";
}

StrategyKind parse_strategy(std::string_view text) {
  const auto lower = utf8::ascii_lower(text);
  for (auto kind : all_strategies()) {
    if (lower == strategy_name(kind) || lower == utf8::ascii_lower(strategy_label(kind))) return kind;
  }
  if (lower == "zero_shot" || lower == "zeroshot") return StrategyKind::ZeroShot;
  throw Error(ErrorKind::Config, "unknown strategy '" + std::string(text) + "'");
}

std::vector<StrategyKind> all_strategies() {
  return {StrategyKind::ZeroShot, StrategyKind::Random, StrategyKind::Bm25,
          StrategyKind::Similar,  StrategyKind::Precedent, StrategyKind::Cap};
}

std::string summary_prompt(std::string_view context) {
  std::string out =
      "Summarize the key topics and information of the following text in one concise sentence, "
      "written in the same language as the text.\n\nText:\n";
  out += context;
  out += "\n\nSummary:";
  return out;
}

Summary summarize_context(const attention::ContextWindow& window, const corpus::Document& doc,
                          Generator& generator) {
  Summary summary;
  summary.source_sentence_indices = window.members;
  std::sort(summary.source_sentence_indices.begin(), summary.source_sentence_indices.end());
  if (summary.source_sentence_indices.empty()) return summary;

  std::string context;
  std::string label = "summarizing context window [";
  for (std::size_t n = 0; n < summary.source_sentence_indices.size(); ++n) {
    const auto index = summary.source_sentence_indices[n];
    if (index >= doc.sentences.size()) {
      throw Error(ErrorKind::InvalidArgument, "window member " + std::to_string(index) + " is not in document " + doc.doc_id);
    }
    if (n > 0) {
      context += ' ';
      label += ", ";
    }
    context += doc.sentences[index].text;
    label += std::to_string(index);
  }
  label += "] of " + doc.doc_id;

  GenerationRequest request;
  request.prompt = summary_prompt(context);
  request.max_new_tokens = kSummaryMaxNewTokens;
  request.temperature = 0.0;
  try {
    summary.text = std::string(utf8::trim(generator.generate(request)));
    if (summary.text.empty()) throw Error(ErrorKind::BackendProtocol, "backend returned an empty summary");
  } catch (Error& e) {
    e.add_context(label);
    throw;
  }
  return summary;
}

void PrecedentState::push(std::size_t sentence_index, std::string source, std::string output) {
  history_.push_back({sentence_index, std::move(source), std::move(output)});
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) { return splitmix64(seed ^ splitmix64(key)); }

DemoSelection select_demonstrations(const Strategy& strategy, const QueryContext& query,
                                    const datastore::DatastoreIndex* index, const PrecedentState& state) {
  DemoSelection selection;
  const std::size_t k = strategy.kind == StrategyKind::ZeroShot ? 0 : strategy.k;
  if (k == 0) return selection;

  switch (strategy.kind) {
    case StrategyKind::ZeroShot:
      break;
    case StrategyKind::Random: {
      const auto& idx = require_index(index, strategy.kind);
      selection.demos = from_hits(idx.sample_random(std::min(k, idx.size()), mix_seed(strategy.seed, query.sample_key)));
      break;
    }
    case StrategyKind::Bm25:
      selection.demos = from_hits(require_index(index, strategy.kind).retrieve_bm25(query.source, k));
      break;
    case StrategyKind::Similar:
      selection.demos = from_hits(require_index(index, strategy.kind)
                                      .retrieve_similar(require_embedding(query.source_embedding, "source"), k));
      break;
    case StrategyKind::Cap: {
      const auto& idx = require_index(index, strategy.kind);
      const bool have_summary = query.summary != nullptr && !query.summary->text.empty();
      if (have_summary) {
        selection.demos = from_hits(idx.retrieve_similar(require_embedding(query.summary_embedding, "summary"), k));
      } else {
        selection.fell_back_to_similar = true;
        selection.demos = from_hits(idx.retrieve_similar(require_embedding(query.source_embedding, "source"), k));
      }
      break;
    }
    case StrategyKind::Precedent: {
      const auto& history = state.history();
      std::vector<Demonstration> picked;
      for (auto it = history.rbegin(); it != history.rend() && picked.size() < k; ++it) {
        if (it->sentence_index >= query.sentence_index) continue;
        if (utf8::trim(it->source).empty() || utf8::trim(it->output).empty()) continue;
        picked.push_back({it->source, it->output, {OriginKind::Precedent, it->sentence_index}});
      }
      selection.demos.assign(picked.rbegin(), picked.rend());
      break;
    }
  }
  return selection;
}

}  // namespace cap::prompting
