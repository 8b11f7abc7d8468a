#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cap::eval {

// Documents as lists of sentences.
using DocumentSet = std::vector<std::vector<std::string>>;

// Whitespace split with every punctuation character as its own token;
// zh and ja are tokenized per character.
std::vector<std::string> tokenize(std::string_view text, std::string_view lang);

// Sentences joined by single spaces.
std::string join_document(std::span<const std::string> sentences);

struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

BleuStats bleu_stats(const DocumentSet& hyp_docs, const DocumentSet& ref_docs, std::string_view lang);
// Corpus BLEU-4 in [0, 100]: unigram precision unsmoothed, add-one
// smoothing for orders 2 to 4, standard brevity penalty.
double bleu_from_stats(const BleuStats& stats);

// BLEU over whole documents (each document's sentences concatenated).
// Throws EmptyEvalSet for zero documents and AlignmentError when the
// document counts differ.
double d_bleu(const DocumentSet& hyp_docs, const DocumentSet& ref_docs, std::string_view lang = "en");

inline constexpr std::size_t kChrfOrder = 6;
inline constexpr double kChrfBeta = 2.0;

struct ChrfStats {
  // Per order (1..6): hypothesis n-grams, reference n-grams, clipped matches.
  std::array<std::size_t, kChrfOrder> hyp{};
  std::array<std::size_t, kChrfOrder> ref{};
  std::array<std::size_t, kChrfOrder> match{};
};

ChrfStats chrf_stats(const DocumentSet& hyp_docs, const DocumentSet& ref_docs);
// Precision and recall are averaged over the orders where both sides have
// n-grams, then combined into F-beta with beta = 2.
double chrf_from_stats(const ChrfStats& stats);

// Character 6-gram F2 over whole documents, whitespace removed; in [0, 100].
double chrf2(const DocumentSet& hyp_docs, const DocumentSet& ref_docs);

struct ZptAnnotation {
  std::string source;
  std::string reference;
  std::vector<std::string> expected_pronouns;
};

// JSON lines of {source, reference, expected_pronouns}.
std::vector<ZptAnnotation> read_zpt_annotations(std::istream& in);

// Case-insensitive match of `word` bounded by non-word characters.
bool contains_whole_word(std::string_view text, std::string_view word);

// Fraction of outputs containing any expected pronoun of the aligned annotation.
double zpt_accuracy(std::span<const std::string> outputs, std::span<const ZptAnnotation> annotations);

struct Scores {
  double d_bleu = 0.0;
  double chrf2 = 0.0;
  std::optional<double> zpt_accuracy;
  std::size_t documents = 0;
  std::size_t sentences = 0;
};

struct ReportRow {
  std::string system;     // strategy label
  std::string lang_pair;  // e.g. "de-en"
  Scores scores;
};

// Plain-text table; the first row is the header, the first column is left-aligned.
std::string render_text_table(const std::vector<std::vector<std::string>>& table);

std::string format_score(double value);

struct EvalReport {
  nlohmann::json config;
  std::vector<ReportRow> rows;

  nlohmann::json to_json() const;
  // Rows are systems, columns are metrics grouped by language pair.
  std::string render_table() const;
};

}  // namespace cap::eval
