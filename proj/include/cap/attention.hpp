#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cap/corpus.hpp"

namespace cap::attention {

// Final-layer attention weights, stored head-major: weights[(h * T + i) * T + j]
// is the weight token i pays to token j under head h.
class AttentionTensor {
 public:
  AttentionTensor() = default;
  AttentionTensor(std::size_t heads, std::size_t tokens, bool causal, std::vector<double> weights);

  std::size_t heads() const { return heads_; }
  std::size_t tokens() const { return tokens_; }
  bool causal() const { return causal_; }
  const std::vector<double>& weights() const { return weights_; }

  double at(std::size_t head, std::size_t i, std::size_t j) const {
    return weights_[(head * tokens_ + i) * tokens_ + j];
  }
  std::span<const double> row(std::size_t head, std::size_t i) const {
    return {weights_.data() + (head * tokens_ + i) * tokens_, tokens_};
  }

  // Throws InvalidTensor unless every weight is finite and non-negative,
  // masked (j > i) positions of a causal tensor are exactly zero and every
  // row sums to one within `tolerance`.
  void validate(double tolerance = 1e-3) const;

 private:
  std::size_t heads_ = 0;
  std::size_t tokens_ = 0;
  bool causal_ = true;
  std::vector<double> weights_;
};

// Head-averaged token-token attention.
class TokenMatrix {
 public:
  TokenMatrix() = default;
  TokenMatrix(std::size_t tokens, bool causal, std::vector<double> values);

  std::size_t size() const { return size_; }
  bool causal() const { return causal_; }
  double at(std::size_t i, std::size_t j) const { return values_[i * size_ + j]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * size_, size_}; }
  const std::vector<double>& values() const { return values_; }

  // Whether token i may attend to token j.
  bool visible(std::size_t i, std::size_t j) const { return !causal_ || j <= i; }

 private:
  std::size_t size_ = 0;
  bool causal_ = true;
  std::vector<double> values_;
};

// Token to sentence assignment. Special tokens (BOS, prompt scaffolding,
// whitespace-only pieces) map to no sentence and never contribute a score.
struct SentenceMap {
  std::vector<std::optional<std::size_t>> token_to_sentence;
  std::vector<std::vector<std::size_t>> sentence_tokens;

  static SentenceMap from_assignment(std::vector<std::optional<std::size_t>> assignment,
                                     std::size_t num_sentences);

  std::size_t num_tokens() const { return token_to_sentence.size(); }
  std::size_t num_sentences() const { return sentence_tokens.size(); }
  void validate() const;
};

// Assigns each token to the sentence its byte range overlaps most (the
// earlier sentence on ties). Empty ranges and tokens lying entirely in
// inter-sentence whitespace are special.
SentenceMap map_tokens(std::span<const corpus::Span> token_ranges,
                       std::span<const corpus::Sentence> sentences);

enum class ScoreMode { Max, Avg };

// Sentence-to-sentence attention. Pairs with no visible token positions are
// absent (nullopt), which is distinct from a score of zero.
class SentenceAttentionMatrix {
 public:
  SentenceAttentionMatrix(std::size_t sentences, ScoreMode mode);

  std::size_t size() const { return size_; }
  ScoreMode mode() const { return mode_; }
  std::optional<double> at(std::size_t from, std::size_t to) const { return scores_[from * size_ + to]; }
  void set(std::size_t from, std::size_t to, std::optional<double> score) {
    scores_[from * size_ + to] = score;
  }

 private:
  std::size_t size_;
  ScoreMode mode_;
  std::vector<std::optional<double>> scores_;
};

struct ContextWindow {
  std::size_t current = 0;
  std::vector<std::size_t> members;  // strictly ascending, never contains current
  std::size_t n_requested = 0;

  friend bool operator==(const ContextWindow&, const ContextWindow&) = default;
};

inline constexpr std::size_t kDefaultContextSize = 3;

// Throws InvalidTensor on NaN or infinite weights.
TokenMatrix average_heads(const AttentionTensor& tensor);

// Max (or mean) attention from `token` to the visible tokens of `sentence`.
std::optional<double> token_sentence_score(const TokenMatrix& matrix, std::size_t token,
                                           std::size_t sentence, const SentenceMap& map,
                                           ScoreMode mode);

// Mean over the tokens of `from` of their token-sentence score toward `to`,
// skipping tokens that see nothing of `to`. Throws SelfScore when from == to.
std::optional<double> sentence_sentence_score(const TokenMatrix& matrix, std::size_t from,
                                              std::size_t to, const SentenceMap& map,
                                              ScoreMode mode);

SentenceAttentionMatrix sentence_attention(const TokenMatrix& matrix, const SentenceMap& map,
                                           ScoreMode mode);

// Top-n sentences by score toward `current` (ties go to the earlier
// sentence), returned in document order.
ContextWindow select_context(const SentenceAttentionMatrix& scores, std::size_t current,
                             std::size_t n = kDefaultContextSize);

// The `before` preceding and `after` following sentences, clamped to the document.
ContextWindow fixed_context(std::size_t current, std::size_t total, std::size_t before = 2,
                            std::size_t after = 2);

}  // namespace cap::attention
