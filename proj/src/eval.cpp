#include "cap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "cap/error.hpp"
#include "cap/utf8.hpp"

namespace cap::eval {

namespace {

bool character_level(std::string_view lang) {
  const auto primary = utf8::ascii_lower(lang.substr(0, lang.find_first_of("-_")));
  return primary == "zh" || primary == "ja";
}

void check_shapes(const DocumentSet& hyp, const DocumentSet& ref) {
  if (hyp.empty() || ref.empty()) throw Error(ErrorKind::EmptyEvalSet, "no documents to score");
  if (hyp.size() != ref.size()) {
    throw Error(ErrorKind::Alignment, std::to_string(hyp.size()) + " hypothesis documents vs " +
                                          std::to_string(ref.size()) + " reference documents");
  }
}

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n, std::string_view sep) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      key += sep;
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

std::size_t clipped_matches(const NgramCounts& hyp, const NgramCounts& ref) {
  std::size_t total = 0;
  for (const auto& [gram, count] : hyp) {
    if (auto it = ref.find(gram); it != ref.end()) total += std::min(count, it->second);
  }
  return total;
}

std::vector<std::string> characters_without_space(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& cp : utf8::decode(text)) {
    if (!utf8::is_space(cp.value)) out.emplace_back(text.substr(cp.offset, cp.length));
  }
  return out;
}

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, std::string_view lang) {
  const bool chars = character_level(lang);
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (const auto& cp : utf8::decode(text)) {
    const auto piece = text.substr(cp.offset, cp.length);
    if (utf8::is_space(cp.value)) {
      flush();
    } else if (chars || utf8::is_punct(cp.value)) {
      flush();
      out.emplace_back(piece);
    } else {
      current.append(piece);
    }
  }
  flush();
  return out;
}

std::string join_document(std::span<const std::string> sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

BleuStats bleu_stats(const DocumentSet& hyp_docs, const DocumentSet& ref_docs, std::string_view lang) {
  check_shapes(hyp_docs, ref_docs);
  BleuStats stats;
  for (std::size_t d = 0; d < hyp_docs.size(); ++d) {
    const auto hyp = tokenize(join_document(hyp_docs[d]), lang);
    const auto ref = tokenize(join_document(ref_docs[d]), lang);
    stats.hyp_length += hyp.size();
    stats.ref_length += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hyp_grams = ngrams(hyp, n, "\x1f");
      stats.matches[n - 1] += clipped_matches(hyp_grams, ngrams(ref, n, "\x1f"));
      stats.totals[n - 1] += hyp.size() >= n ? hyp.size() - n + 1 : 0;
    }
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats) {
  if (stats.hyp_length == 0 || stats.matches[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(stats.matches[0]) / static_cast<double>(stats.totals[0]));
  for (std::size_t n = 1; n < 4; ++n) {
    log_sum += std::log((static_cast<double>(stats.matches[n]) + 1.0) / (static_cast<double>(stats.totals[n]) + 1.0));
  }
  const double c = static_cast<double>(stats.hyp_length);
  const double r = static_cast<double>(stats.ref_length);
  const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * brevity * std::exp(log_sum / 4.0);
}

double d_bleu(const DocumentSet& hyp_docs, const DocumentSet& ref_docs, std::string_view lang) {
  return bleu_from_stats(bleu_stats(hyp_docs, ref_docs, lang));
}

ChrfStats chrf_stats(const DocumentSet& hyp_docs, const DocumentSet& ref_docs) {
  check_shapes(hyp_docs, ref_docs);
  ChrfStats stats;
  for (std::size_t d = 0; d < hyp_docs.size(); ++d) {
    const auto hyp = characters_without_space(join_document(hyp_docs[d]));
    const auto ref = characters_without_space(join_document(ref_docs[d]));
    for (std::size_t n = 1; n <= kChrfOrder; ++n) {
      const auto hyp_grams = ngrams(hyp, n, "");
      stats.hyp[n - 1] += hyp.size() >= n ? hyp.size() - n + 1 : 0;
      stats.ref[n - 1] += ref.size() >= n ? ref.size() - n + 1 : 0;
      stats.match[n - 1] += clipped_matches(hyp_grams, ngrams(ref, n, ""));
    }
  }
  return stats;
}

double chrf_from_stats(const ChrfStats& stats) {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t effective = 0;
  for (std::size_t n = 0; n < kChrfOrder; ++n) {
    if (stats.hyp[n] == 0 || stats.ref[n] == 0) continue;
    precision += static_cast<double>(stats.match[n]) / static_cast<double>(stats.hyp[n]);
    recall += static_cast<double>(stats.match[n]) / static_cast<double>(stats.ref[n]);
    ++effective;
  }
  if (effective == 0) return 0.0;
  precision /= static_cast<double>(effective);
  recall /= static_cast<double>(effective);
  if (precision + recall == 0.0) return 0.0;
  const double beta2 = kChrfBeta * kChrfBeta;
  return 100.0 * (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
}

double chrf2(const DocumentSet& hyp_docs, const DocumentSet& ref_docs) {
  return chrf_from_stats(chrf_stats(hyp_docs, ref_docs));
}

std::vector<ZptAnnotation> read_zpt_annotations(std::istream& in) {
  std::vector<ZptAnnotation> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (utf8::trim(line).empty()) continue;
    ZptAnnotation a;
    try {
      const auto j = nlohmann::json::parse(line);
      a.source = j.at("source").get<std::string>();
      a.reference = j.at("reference").get<std::string>();
      for (const auto& p : j.at("expected_pronouns")) a.expected_pronouns.emplace_back(utf8::trim(p.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusFormatError(number, std::string("bad ZPT annotation: ") + e.what());
    }
    if (a.expected_pronouns.empty()) throw CorpusFormatError(number, "expected_pronouns is empty");
    for (const auto& p : a.expected_pronouns) {
      if (p.empty() || tokenize(p, "en").size() != 1 || p.find(' ') != std::string::npos) {
        throw CorpusFormatError(number, "expected pronoun '" + p + "' is not a single token");
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

bool contains_whole_word(std::string_view text, std::string_view word) {
  if (word.empty()) return false;
  const auto haystack = utf8::ascii_lower(text);
  const auto needle = utf8::ascii_lower(word);
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
    const bool left = pos == 0 || !is_word_byte(static_cast<unsigned char>(haystack[pos - 1]));
    const auto end = pos + needle.size();
    const bool right = end == haystack.size() || !is_word_byte(static_cast<unsigned char>(haystack[end]));
    if (left && right) return true;
  }
  return false;
}

double zpt_accuracy(std::span<const std::string> outputs, std::span<const ZptAnnotation> annotations) {
  if (outputs.size() != annotations.size()) {
    throw Error(ErrorKind::Alignment, std::to_string(outputs.size()) + " outputs vs " +
                                          std::to_string(annotations.size()) + " annotations");
  }
  if (outputs.empty()) throw Error(ErrorKind::EmptyEvalSet, "no ZPT examples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& expected = annotations[i].expected_pronouns;
    if (std::any_of(expected.begin(), expected.end(),
                    [&](const std::string& p) { return contains_whole_word(outputs[i], p); })) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(outputs.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json r = {{"system", row.system},
                        {"lang_pair", row.lang_pair},
                        {"d_bleu", row.scores.d_bleu},
                        {"chrf2", row.scores.chrf2},
                        {"documents", row.scores.documents},
                        {"sentences", row.scores.sentences}};
    if (row.scores.zpt_accuracy) r["zpt_accuracy"] = *row.scores.zpt_accuracy;
    rows_json.push_back(std::move(r));
  }
  return {{"kind", "evaluation"}, {"config", config}, {"rows", std::move(rows_json)}};
}

std::string EvalReport::render_table() const {
  std::vector<std::string> systems;
  std::vector<std::string> pairs;
  bool any_zpt = false;
  std::map<std::pair<std::string, std::string>, const Scores*> cells;
  for (const auto& row : rows) {
    if (std::find(systems.begin(), systems.end(), row.system) == systems.end()) systems.push_back(row.system);
    if (std::find(pairs.begin(), pairs.end(), row.lang_pair) == pairs.end()) pairs.push_back(row.lang_pair);
    any_zpt = any_zpt || row.scores.zpt_accuracy.has_value();
    cells[{row.system, row.lang_pair}] = &row.scores;
  }

  std::vector<std::string> header{"methods"};
  for (const auto& p : pairs) {
    header.push_back(p + " d-BLEU");
    header.push_back(p + " chrF2");
    if (any_zpt) header.push_back(p + " ZPT");
  }
  std::vector<std::vector<std::string>> table{header};
  for (const auto& system : systems) {
    std::vector<std::string> line{system};
    for (const auto& p : pairs) {
      auto it = cells.find({system, p});
      const Scores* s = it == cells.end() ? nullptr : it->second;
      line.push_back(s ? format_score(s->d_bleu) : "-");
      line.push_back(s ? format_score(s->chrf2) : "-");
      if (any_zpt) line.push_back(s && s->zpt_accuracy ? format_score(100.0 * *s->zpt_accuracy) : "-");
    }
    table.push_back(std::move(line));
  }

  return render_text_table(table);
}

std::string format_score(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

std::string render_text_table(const std::vector<std::vector<std::string>>& table) {
  if (table.empty()) return {};
  std::vector<std::size_t> widths(table.front().size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t c = 0; c < table[r].size(); ++c) {
      const auto& cell = table[r][c];
      const std::string pad(widths[c] - cell.size(), ' ');
      out += c == 0 ? cell + pad : " | " + pad + cell;
    }
    out += '\n';
    if (r == 0) {
      for (std::size_t c = 0; c < widths.size(); ++c) out += (c == 0 ? "" : "-+-") + std::string(widths[c], '-');
      out += '\n';
    }
  }
  return out;
}

}  // namespace cap::eval
