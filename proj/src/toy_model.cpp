#include "cap/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cap/error.hpp"
#include "cap/utf8.hpp"

namespace cap::backend {

namespace {

using nlohmann::json;

const std::unordered_map<std::string, std::string>& builtin_lexicon() {
  static const std::unordered_map<std::string, std::string> lexicon = {
      {"der", "the"}, {"die", "the"}, {"das", "the"}, {"den", "the"}, {"dem", "the"},
      {"ein", "a"}, {"eine", "a"}, {"einen", "a"}, {"und", "and"}, {"oder", "or"},
      {"ist", "is"}, {"sind", "are"}, {"war", "was"}, {"hat", "has"}, {"haben", "have"},
      {"er", "he"}, {"sie", "she"}, {"es", "it"}, {"wir", "we"}, {"ich", "i"},
      {"sein", "his"}, {"seine", "his"}, {"seiner", "his"}, {"ihr", "her"}, {"ihre", "her"},
      {"in", "in"}, {"im", "in the"}, {"mit", "with"}, {"auf", "on"}, {"von", "of"},
      {"für", "for"}, {"nicht", "not"}, {"auch", "also"}, {"sehr", "very"}, {"heute", "today"},
      {"stadt", "city"}, {"haus", "house"}, {"hund", "dog"}, {"katze", "cat"}, {"buch", "book"},
      {"professor", "professor"}, {"forschung", "research"}, {"arbeitet", "works"},
      {"universität", "university"}, {"lehrt", "teaches"}, {"studenten", "students"},
      {"schreibt", "writes"}, {"neues", "new"}, {"neue", "new"}, {"neuen", "new"},
      {"alt", "old"}, {"alte", "old"}, {"groß", "big"}, {"große", "big"}, {"klein", "small"},
      {"kleine", "small"}, {"morgen", "tomorrow"}, {"gestern", "yesterday"}, {"wetter", "weather"},
      {"regnet", "rains"}, {"sonne", "sun"}, {"scheint", "shines"}, {"park", "park"},
      {"geht", "goes"}, {"gehen", "go"}, {"spielt", "plays"}, {"kinder", "children"},
      {"liest", "reads"}, {"zeitung", "newspaper"}, {"markt", "market"}, {"kauft", "buys"},
      {"brot", "bread"}, {"äpfel", "apples"}, {"daten", "data"}, {"medien", "media"},
      {"netzwerk", "network"}, {"zug", "train"}, {"fährt", "travels"}, {"nach", "to"},
      {"berlin", "Berlin"}, {"bahnhof", "station"}, {"spät", "late"}, {"pünktlich", "on time"},
  };
  return lexicon;
}

struct WordParts {
  std::string lead;
  std::string core;
  std::string trail;
};

WordParts split_word(std::string_view token) {
  const auto cps = utf8::decode(token);
  std::size_t first = 0;
  std::size_t last = cps.size();
  while (first < last && utf8::is_punct(cps[first].value)) ++first;
  while (last > first && utf8::is_punct(cps[last - 1].value)) --last;
  auto slice = [&](std::size_t a, std::size_t b) {
    if (a >= b) return std::string();
    return std::string(token.substr(cps[a].offset, cps[b - 1].offset + cps[b - 1].length - cps[a].offset));
  };
  return {slice(0, first), slice(first, last), slice(last, cps.size())};
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (const auto& cp : utf8::decode(text)) {
    if (utf8::is_space(cp.value)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.append(text.substr(cp.offset, cp.length));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<std::string> content_words(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& token : split_whitespace(text)) {
    auto core = split_word(token).core;
    if (!core.empty()) out.push_back(utf8::ascii_lower(core));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string summarize(std::string_view context) {
  std::vector<std::string> picked;
  std::unordered_set<std::string> seen;
  for (const auto& token : split_whitespace(context)) {
    const auto core = split_word(token).core;
    if (utf8::count(core) < 4) continue;
    if (!seen.insert(utf8::ascii_lower(core)).second) continue;
    picked.push_back(core);
    if (picked.size() == 12) break;
  }
  if (picked.empty()) return std::string(utf8::trim(context));
  std::string out;
  for (const auto& w : picked) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string translate(std::string_view prompt) {
  auto lines = lines_of(prompt);
  while (!lines.empty() && utf8::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) return "";
  const std::string cue(utf8::trim(lines.back()));
  if (cue.size() < 2 || cue.back() != ':' || lines.size() < 2) return cue;
  const std::string tgt_label = cue.substr(0, cue.size() - 1) + ": ";
  const std::string& query_line = lines[lines.size() - 2];
  const auto colon = query_line.find(": ");
  if (colon == std::string::npos) return query_line;
  const std::string src_label = query_line.substr(0, colon + 2);
  const std::string query = query_line.substr(colon + 2);

  std::unordered_map<std::string, std::string> learned;
  for (std::size_t i = 0; i + 1 < lines.size() - 2; ++i) {
    if (lines[i].rfind(src_label, 0) != 0 || lines[i + 1].rfind(tgt_label, 0) != 0) continue;
    const auto src_words = content_words(std::string_view(lines[i]).substr(src_label.size()));
    const auto tgt_words = content_words(std::string_view(lines[i + 1]).substr(tgt_label.size()));
    if (src_words.size() != tgt_words.size()) continue;
    for (std::size_t k = 0; k < src_words.size(); ++k) learned.emplace(src_words[k], tgt_words[k]);
  }

  std::string out;
  for (const auto& token : split_whitespace(query)) {
    auto parts = split_word(token);
    const auto key = utf8::ascii_lower(parts.core);
    std::string word = parts.core;
    if (auto it = learned.find(key); it != learned.end()) {
      word = it->second;
    } else if (auto b = builtin_lexicon().find(key); b != builtin_lexicon().end()) {
      word = b->second;
    }
    if (!out.empty()) out += ' ';
    out += parts.lead + word + parts.trail;
  }
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x3040 && cp <= 0x30FF) || (cp >= 0x3400 && cp <= 0x9FFF) || (cp >= 0xAC00 && cp <= 0xD7AF);
}

Reply bad_request(const std::string& message) {
  return {400, json{{"error", {{"type", "bad_request"}, {"message", message}}}}};
}

}  // namespace

ToyModel::ToyModel(ToyModelOptions options) : options_(options) {
  if (options_.embedding_dim == 0 || options_.heads == 0) {
    throw Error(ErrorKind::Config, "toy model needs a positive embedding dimension and head count");
  }
}

std::string ToyModel::generate(const GenerationRequest& request) const {
  static constexpr std::string_view kSummaryCue = "Summary:";
  static constexpr std::string_view kTextCue = "Text:\n";
  std::string_view prompt(request.prompt);
  std::string text;
  if (prompt.size() >= kSummaryCue.size() && prompt.substr(prompt.size() - kSummaryCue.size()) == kSummaryCue) {
    const auto start = prompt.rfind(kTextCue);
    auto body = start == std::string_view::npos ? prompt : prompt.substr(start + kTextCue.size());
    body = body.substr(0, body.size() - kSummaryCue.size());
    text = summarize(body);
  } else {
    text = translate(prompt);
  }
  auto words = split_whitespace(text);
  if (words.size() > request.max_new_tokens) {
    words.resize(request.max_new_tokens);
    text.clear();
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  }
  return text;
}

std::vector<float> ToyModel::embed(std::string_view text) const {
  std::vector<float> v(options_.embedding_dim, 0.0f);
  auto add = [&](std::string_view feature, float weight) {
    const auto h = fnv1a(feature);
    v[h % v.size()] += ((h >> 32) & 1) ? weight : -weight;
  };
  const std::string padded = " " + utf8::ascii_lower(text) + " ";
  const auto cps = utf8::decode(padded);
  for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
    const auto begin = cps[i].offset;
    const auto end = cps[i + 2].offset + cps[i + 2].length;
    add(std::string_view(padded).substr(begin, end - begin), 1.0f);
  }
  for (const auto& w : content_words(text)) add("w:" + w, 2.0f);
  if (std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) v[fnv1a(text) % v.size()] = 1.0f;
  return v;
}

AttentionResponse ToyModel::attention(std::string_view text) const {
  AttentionResponse response;
  response.tokens.push_back({"<s>", {0, 0}});
  std::vector<bool> punct{false};
  const auto cps = utf8::decode(text);
  for (std::size_t i = 0; i < cps.size();) {
    const char32_t cp = cps[i].value;
    if (utf8::is_space(cp)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (!utf8::is_punct(cp) && !is_cjk(cp)) {
      while (j < cps.size() && !utf8::is_space(cps[j].value) && !utf8::is_punct(cps[j].value) && !is_cjk(cps[j].value)) ++j;
    }
    const corpus::Span range{cps[i].offset, cps[j - 1].offset + cps[j - 1].length};
    response.tokens.push_back({std::string(text.substr(range.begin, range.size())), range});
    punct.push_back(utf8::is_punct(cp));
    i = j;
  }

  const std::size_t t = response.tokens.size();
  std::vector<std::string> keys(t);
  for (std::size_t k = 1; k < t; ++k) keys[k] = utf8::ascii_lower(response.tokens[k].text);

  std::vector<double> weights(options_.heads * t * t, 0.0);
  std::vector<double> logits(t);
  for (std::size_t h = 0; h < options_.heads; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      double max_logit = -1e300;
      for (std::size_t j = 0; j <= i; ++j) {
        const double distance = static_cast<double>(i - j);
        double logit = 0.0;
        if (h % 2 == 0) {
          const bool word_pair = i > 0 && j > 0 && i != j && !punct[i] && !punct[j];
          if (word_pair && keys[i] == keys[j]) logit += 3.0;
          if (word_pair && keys[i].size() >= 4 && keys[j].size() >= 4 && keys[i].compare(0, 4, keys[j], 0, 4) == 0) {
            logit += 1.5;
          }
          if (j == 0) logit += 1.0;
          logit -= 0.05 * distance;
        } else {
          logit = -0.25 * distance + (punct[j] ? 0.5 : 0.0);
        }
        logits[j] = logit;
        max_logit = std::max(max_logit, logit);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        logits[j] = std::exp(logits[j] - max_logit);
        sum += logits[j];
      }
      for (std::size_t j = 0; j <= i; ++j) weights[(h * t + i) * t + j] = logits[j] / sum;
    }
  }
  response.tensor = attention::AttentionTensor(options_.heads, t, true, std::move(weights));
  return response;
}

Reply ToyModel::handle(std::string_view route, const json& request) const {
  try {
    if (route == kGenerateRoute) {
      GenerationRequest req;
      req.prompt = request.at("prompt").get<std::string>();
      req.max_new_tokens = request.value("max_new_tokens", std::size_t{256});
      req.temperature = request.value("temperature", 0.0);
      req.stop = request.value("stop", std::vector<std::string>{});
      return {200, json{{"text", generate(req)}}};
    }
    if (route == kEmbedRoute) {
      json vectors = json::array();
      for (const auto& text : request.at("texts")) vectors.push_back(embed(text.get<std::string>()));
      return {200, json{{"embeddings", std::move(vectors)}}};
    }
    if (route == kAttentionRoute) {
      const auto text = request.at("text").get<std::string>();
      if (text.size() > options_.max_input_bytes) {
        return {413, json{{"error",
                           {{"type", "context_length_exceeded"},
                            {"limit", options_.max_input_bytes},
                            {"requested", text.size()}}}}};
      }
      return {200, to_json(attention(text))};
    }
  } catch (const json::exception& e) {
    return bad_request(e.what());
  }
  return {404, json{{"error", {{"type", "not_found"}, {"message", "unknown route " + std::string(route)}}}}};
}

}  // namespace cap::backend
