#include "cap/corpus.hpp"

#include <algorithm>

#include "cap/error.hpp"
#include "cap/utf8.hpp"

namespace cap::corpus {

namespace {

bool is_ascii_terminator(char32_t cp) { return cp == U'.' || cp == U'!' || cp == U'?'; }

bool is_cjk_terminator(char32_t cp) { return cp == U'。' || cp == U'！' || cp == U'？'; }

bool is_closer(char32_t cp) {
  switch (cp) {
    case U'"': case U'\'': case U')': case U']': case U'}':
    case U'”': case U'’': case U'»': case U'」': case U'』':
    case U'》': case U'〉': case U'】': case U'）':
      return true;
    default:
      return false;
  }
}

std::vector<std::string> split_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// Groups consecutive non-blank lines into blocks.
std::vector<std::vector<std::string>> blank_line_blocks(std::istream& in) {
  std::vector<std::vector<std::string>> blocks;
  std::vector<std::string> current;
  for (auto& line : split_lines(in)) {
    if (utf8::trim(line).empty()) {
      if (!current.empty()) blocks.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(std::move(line));
    }
  }
  if (!current.empty()) blocks.push_back(std::move(current));
  return blocks;
}

}  // namespace

std::string_view Document::gap(std::size_t index) const {
  const std::string_view all(text);
  const std::size_t begin = index == 0 ? 0 : sentences[index - 1].range.end;
  const std::size_t end = index < sentences.size() ? sentences[index].range.begin : text.size();
  return all.substr(begin, end - begin);
}

std::string Document::reconstruct() const {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out += gap(i);
    out += sentences[i].text;
  }
  out += gap(sentences.size());
  return out;
}

void Document::validate() const {
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (s.index != i) throw Error(ErrorKind::InvalidArgument, "sentence indices not contiguous");
    if (s.range.empty() || s.range.begin < cursor || s.range.end > text.size()) {
      throw Error(ErrorKind::InvalidArgument, "sentence " + std::to_string(i) + " has a bad range");
    }
    if (std::string_view(text).substr(s.range.begin, s.range.size()) != s.text) {
      throw Error(ErrorKind::InvalidArgument, "sentence " + std::to_string(i) + " text mismatch");
    }
    if (!utf8::trim(std::string_view(text).substr(cursor, s.range.begin - cursor)).empty()) {
      throw Error(ErrorKind::InvalidArgument, "non-whitespace gap before sentence " + std::to_string(i));
    }
    cursor = s.range.end;
  }
  if (!utf8::trim(std::string_view(text).substr(cursor)).empty()) {
    throw Error(ErrorKind::InvalidArgument, "non-whitespace text after the last sentence");
  }
}

std::vector<Sentence> segment_document(std::string_view text, std::string_view /*lang*/) {
  const auto cps = utf8::decode(text);
  std::vector<Sentence> out;

  auto emit = [&](std::size_t begin, std::size_t end) {
    Sentence s;
    s.index = out.size();
    s.range = {begin, end};
    s.text = std::string(text.substr(begin, end - begin));
    out.push_back(std::move(s));
  };

  std::size_t i = 0;
  const std::size_t n = cps.size();
  while (i < n) {
    while (i < n && utf8::is_space(cps[i].value)) ++i;
    if (i == n) break;
    const std::size_t start = i;
    std::size_t last_content = i;  // index of last non-space code point
    bool closed = false;
    while (i < n) {
      const char32_t cp = cps[i].value;
      if (is_ascii_terminator(cp) || is_cjk_terminator(cp)) {
        bool cjk = false;
        std::size_t j = i;
        while (j < n && (is_ascii_terminator(cps[j].value) || is_cjk_terminator(cps[j].value))) {
          cjk = cjk || is_cjk_terminator(cps[j].value);
          ++j;
        }
        while (j < n && is_closer(cps[j].value)) ++j;
        if (cjk || j == n || utf8::is_space(cps[j].value)) {
          emit(cps[start].offset, cps[j - 1].offset + cps[j - 1].length);
          i = j;
          closed = true;
          break;
        }
        last_content = j - 1;
        i = j;
        continue;
      }
      if (!utf8::is_space(cp)) last_content = i;
      ++i;
    }
    if (!closed) emit(cps[start].offset, cps[last_content].offset + cps[last_content].length);
  }

  if (out.empty()) throw Error(ErrorKind::EmptyDocument, "document is empty or whitespace only");
  return out;
}

Document make_document(std::string doc_id, std::string lang, std::string text) {
  Document doc;
  doc.sentences = segment_document(text, lang);
  doc.doc_id = std::move(doc_id);
  doc.lang = std::move(lang);
  doc.text = std::move(text);
  return doc;
}

Document document_from_sentences(std::string doc_id, std::string lang,
                                 const std::vector<std::string>& sentences) {
  Document doc;
  doc.doc_id = std::move(doc_id);
  doc.lang = std::move(lang);
  for (const auto& raw : sentences) {
    const auto trimmed = utf8::trim(raw);
    if (trimmed.empty()) continue;
    if (!doc.text.empty()) doc.text += ' ';
    Sentence s;
    s.index = doc.sentences.size();
    s.range = {doc.text.size(), doc.text.size() + trimmed.size()};
    s.text = std::string(trimmed);
    doc.text += trimmed;
    doc.sentences.push_back(std::move(s));
  }
  if (doc.sentences.empty()) throw Error(ErrorKind::EmptyDocument, "document has no sentences");
  return doc;
}

std::string normalize_punctuation(std::string_view text) {
  std::string mapped;
  mapped.reserve(text.size());
  for (const auto& cp : utf8::decode(text)) {
    switch (cp.value) {
      case U'“': case U'”': case U'„': case U'‟':
      case U'«': case U'»':
        mapped += '"';
        break;
      case U'‘': case U'’': case U'‚': case U'‛':
        mapped += '\'';
        break;
      case U'…':
        mapped += "...";
        break;
      case 0xA0: case 0x2007: case 0x202F:
        mapped += ' ';
        break;
      default:
        mapped.append(text.substr(cp.offset, cp.length));
    }
  }
  std::string out;
  out.reserve(mapped.size());
  for (char c : mapped) {
    if (c == ' ' && !out.empty() && out.back() == ' ') continue;
    out += c;
  }
  return out;
}

bool uses_character_units(std::string_view lang) {
  const auto primary = utf8::ascii_lower(lang.substr(0, lang.find_first_of("-_")));
  return primary == "zh" || primary == "ja" || primary == "ko";
}

std::vector<std::string> tokenize_units(std::string_view text, std::string_view lang) {
  std::vector<std::string> out;
  const bool chars = uses_character_units(lang);
  std::string current;
  for (const auto& cp : utf8::decode(text)) {
    if (utf8::is_space(cp.value)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (chars) {
      out.emplace_back(text.substr(cp.offset, cp.length));
    } else {
      current.append(text.substr(cp.offset, cp.length));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::size_t count_units(std::string_view text, std::string_view lang) {
  return tokenize_units(text, lang).size();
}

std::vector<ParallelPair> length_ratio_filter(const std::vector<ParallelPair>& pairs,
                                              double max_ratio) {
  if (!(max_ratio > 0.0)) throw Error(ErrorKind::InvalidArgument, "max_ratio must be positive");
  std::vector<ParallelPair> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto src_len = count_units(p.src, p.src_lang);
    const auto tgt_len = count_units(p.tgt, p.tgt_lang);
    if (src_len == 0 || tgt_len == 0) {
      throw Error(ErrorKind::ZeroLengthPair, "pair " + std::to_string(i) + " has an empty side");
    }
    const double ratio = static_cast<double>(std::max(src_len, tgt_len)) /
                         static_cast<double>(std::min(src_len, tgt_len));
    if (ratio <= max_ratio) kept.push_back(p);
  }
  return kept;
}

std::vector<ParallelPair> read_parallel_tsv(std::istream& in, const std::string& src_lang,
                                            const std::string& tgt_lang) {
  std::vector<ParallelPair> pairs;
  const auto lines = split_lines(in);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto& line = lines[n];
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw CorpusFormatError(n + 1, "expected exactly 2 tab-separated fields");
    }
    const auto src = utf8::trim(std::string_view(line).substr(0, tab));
    const auto tgt = utf8::trim(std::string_view(line).substr(tab + 1));
    if (src.empty() || tgt.empty()) throw CorpusFormatError(n + 1, "empty side in pair");
    pairs.push_back({std::string(src), std::string(tgt), src_lang, tgt_lang});
  }
  return pairs;
}

std::vector<Document> read_presegmented(std::istream& in, const std::string& lang,
                                        const std::string& id_prefix) {
  std::vector<Document> docs;
  for (const auto& block : blank_line_blocks(in)) {
    docs.push_back(document_from_sentences(id_prefix + std::to_string(docs.size()), lang, block));
  }
  return docs;
}

std::vector<Document> read_raw_documents(std::istream& in, const std::string& lang,
                                         const std::string& id_prefix) {
  std::vector<Document> docs;
  for (const auto& block : blank_line_blocks(in)) {
    std::string text;
    for (const auto& line : block) {
      if (!text.empty()) text += '\n';
      text += line;
    }
    docs.push_back(make_document(id_prefix + std::to_string(docs.size()), lang, std::move(text)));
  }
  return docs;
}

}  // namespace cap::corpus
