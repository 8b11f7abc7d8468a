#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace cap::corpus {

// Half-open [begin, end) byte range into a UTF-8 string.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Sentence {
  std::size_t index = 0;
  Span range;
  std::string text;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

// A source document. Sentence ranges are ascending and disjoint; the bytes
// between them (the gaps) are whitespace only.
struct Document {
  std::string doc_id;
  std::string lang;
  std::string text;
  std::vector<Sentence> sentences;

  // Whitespace preceding sentence `index`; gap(size()) is the trailing gap.
  std::string_view gap(std::size_t index) const;
  // Gaps and sentences interleaved in order; equals `text` for a valid document.
  std::string reconstruct() const;
  // Throws InvalidArgument when any invariant is broken.
  void validate() const;
};

struct ParallelPair {
  std::string src;
  std::string tgt;
  std::string src_lang;
  std::string tgt_lang;

  friend bool operator==(const ParallelPair&, const ParallelPair&) = default;
};

// Splits on . ! ? 。 ！ ？ (runs of them, plus trailing closing quotes and
// brackets). ASCII terminators only end a sentence when followed by
// whitespace or the end of text; CJK terminators always do.
std::vector<Sentence> segment_document(std::string_view text, std::string_view lang);

Document make_document(std::string doc_id, std::string lang, std::string text);

// Builds a document from already-segmented sentences joined by single spaces.
Document document_from_sentences(std::string doc_id, std::string lang,
                                 const std::vector<std::string>& sentences);

// Moses-style punctuation normalization, restricted to: curly and angle
// quotes to ASCII quotes, the ellipsis character to "...", no-break and
// narrow spaces to a plain space, and runs of spaces collapsed to one.
// Idempotent.
std::string normalize_punctuation(std::string_view text);

// zh, ja and ko (with or without region subtags) are measured in characters.
bool uses_character_units(std::string_view lang);

// Whitespace tokens, or non-space characters for character-unit languages.
std::vector<std::string> tokenize_units(std::string_view text, std::string_view lang);
std::size_t count_units(std::string_view text, std::string_view lang);

inline constexpr double kDefaultMaxLengthRatio = 1.5;

// Keeps pairs with max(len)/min(len) <= max_ratio (the boundary is kept).
std::vector<ParallelPair> length_ratio_filter(const std::vector<ParallelPair>& pairs,
                                              double max_ratio = kDefaultMaxLengthRatio);

// `src<TAB>tgt` per line. Throws CorpusFormatError carrying the 1-based line.
std::vector<ParallelPair> read_parallel_tsv(std::istream& in, const std::string& src_lang,
                                            const std::string& tgt_lang);

// One sentence per line, documents separated by blank lines. Documents are
// named `<id_prefix><n>` with n counted from 0.
std::vector<Document> read_presegmented(std::istream& in, const std::string& lang,
                                        const std::string& id_prefix = "doc");

// Raw paragraphs separated by blank lines, each segmented into sentences.
std::vector<Document> read_raw_documents(std::istream& in, const std::string& lang,
                                         const std::string& id_prefix = "doc");

}  // namespace cap::corpus
