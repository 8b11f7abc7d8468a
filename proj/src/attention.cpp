#include "cap/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cap/error.hpp"

namespace cap::attention {

namespace {

std::string position(std::size_t h, std::size_t i, std::size_t j) {
  return "[" + std::to_string(h) + "][" + std::to_string(i) + "][" + std::to_string(j) + "]";
}

}  // namespace

AttentionTensor::AttentionTensor(std::size_t heads, std::size_t tokens, bool causal,
                                 std::vector<double> weights)
    : heads_(heads), tokens_(tokens), causal_(causal), weights_(std::move(weights)) {
  if (heads_ == 0 || tokens_ == 0) {
    throw Error(ErrorKind::InvalidTensor, "tensor needs at least one head and one token");
  }
  if (weights_.size() != heads_ * tokens_ * tokens_) {
    throw Error(ErrorKind::InvalidTensor, "expected " + std::to_string(heads_ * tokens_ * tokens_) +
                                              " weights, got " + std::to_string(weights_.size()));
  }
}

void AttentionTensor::validate(double tolerance) const {
  for (std::size_t h = 0; h < heads_; ++h) {
    for (std::size_t i = 0; i < tokens_; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < tokens_; ++j) {
        const double w = at(h, i, j);
        if (!std::isfinite(w)) throw Error(ErrorKind::InvalidTensor, "non-finite weight at " + position(h, i, j));
        if (w < 0.0) throw Error(ErrorKind::InvalidTensor, "negative weight at " + position(h, i, j));
        if (causal_ && j > i && w != 0.0) {
          throw Error(ErrorKind::InvalidTensor, "masked position carries weight at " + position(h, i, j));
        }
        sum += w;
      }
      if (std::abs(sum - 1.0) > tolerance) {
        throw Error(ErrorKind::InvalidTensor, "row " + std::to_string(i) + " of head " + std::to_string(h) +
                                                  " sums to " + std::to_string(sum));
      }
    }
  }
}

TokenMatrix::TokenMatrix(std::size_t tokens, bool causal, std::vector<double> values)
    : size_(tokens), causal_(causal), values_(std::move(values)) {
  if (values_.size() != size_ * size_) {
    throw Error(ErrorKind::InvalidArgument, "token matrix must be square");
  }
}

SentenceMap SentenceMap::from_assignment(std::vector<std::optional<std::size_t>> assignment,
                                         std::size_t num_sentences) {
  SentenceMap map;
  map.sentence_tokens.resize(num_sentences);
  for (std::size_t t = 0; t < assignment.size(); ++t) {
    if (!assignment[t]) continue;
    if (*assignment[t] >= num_sentences) {
      throw Error(ErrorKind::InvalidArgument, "token " + std::to_string(t) + " maps past the last sentence");
    }
    map.sentence_tokens[*assignment[t]].push_back(t);
  }
  map.token_to_sentence = std::move(assignment);
  return map;
}

void SentenceMap::validate() const {
  std::size_t mapped = 0;
  for (std::size_t s = 0; s < sentence_tokens.size(); ++s) {
    const auto& tokens = sentence_tokens[s];
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      if (tokens[k] >= token_to_sentence.size() || token_to_sentence[tokens[k]] != s ||
          (k > 0 && tokens[k] <= tokens[k - 1])) {
        throw Error(ErrorKind::InvalidArgument, "sentence map is inconsistent at sentence " + std::to_string(s));
      }
    }
    mapped += tokens.size();
  }
  const auto assigned = std::count_if(token_to_sentence.begin(), token_to_sentence.end(),
                                      [](const auto& s) { return s.has_value(); });
  if (static_cast<std::size_t>(assigned) != mapped) {
    throw Error(ErrorKind::InvalidArgument, "sentence map is inconsistent");
  }
}

SentenceMap map_tokens(std::span<const corpus::Span> token_ranges,
                       std::span<const corpus::Sentence> sentences) {
  std::vector<std::optional<std::size_t>> assignment(token_ranges.size());
  for (std::size_t t = 0; t < token_ranges.size(); ++t) {
    const auto& tok = token_ranges[t];
    if (tok.empty()) continue;
    auto it = std::partition_point(sentences.begin(), sentences.end(),
                                   [&](const corpus::Sentence& s) { return s.range.end <= tok.begin; });
    std::size_t best_overlap = 0;
    for (; it != sentences.end() && it->range.begin < tok.end; ++it) {
      const std::size_t overlap =
          std::min(tok.end, it->range.end) - std::max(tok.begin, it->range.begin);
      if (overlap > best_overlap) {
        best_overlap = overlap;
        assignment[t] = it->index;
      }
    }
  }
  return SentenceMap::from_assignment(std::move(assignment), sentences.size());
}

SentenceAttentionMatrix::SentenceAttentionMatrix(std::size_t sentences, ScoreMode mode)
    : size_(sentences), mode_(mode), scores_(sentences * sentences) {}

TokenMatrix average_heads(const AttentionTensor& tensor) {
  const std::size_t t = tensor.tokens();
  std::vector<double> out(t * t, 0.0);
  for (std::size_t h = 0; h < tensor.heads(); ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      const auto row = tensor.row(h, i);
      for (std::size_t j = 0; j < t; ++j) {
        if (!std::isfinite(row[j])) throw Error(ErrorKind::InvalidTensor, "non-finite weight at " + position(h, i, j));
        out[i * t + j] += row[j];
      }
    }
  }
  const auto heads = static_cast<double>(tensor.heads());
  for (double& v : out) v /= heads;
  return TokenMatrix(t, tensor.causal(), std::move(out));
}

std::optional<double> token_sentence_score(const TokenMatrix& matrix, std::size_t token,
                                           std::size_t sentence, const SentenceMap& map,
                                           ScoreMode mode) {
  std::optional<double> best;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k : map.sentence_tokens.at(sentence)) {
    if (!matrix.visible(token, k)) continue;
    const double v = matrix.at(token, k);
    if (!best || v > *best) best = v;
    sum += v;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return mode == ScoreMode::Max ? *best : sum / static_cast<double>(count);
}

std::optional<double> sentence_sentence_score(const TokenMatrix& matrix, std::size_t from,
                                              std::size_t to, const SentenceMap& map,
                                              ScoreMode mode) {
  if (from == to) {
    throw Error(ErrorKind::SelfScore, "sentence " + std::to_string(from) + " scored against itself");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i : map.sentence_tokens.at(from)) {
    if (auto ts = token_sentence_score(matrix, i, to, map, mode)) {
      sum += *ts;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

SentenceAttentionMatrix sentence_attention(const TokenMatrix& matrix, const SentenceMap& map,
                                           ScoreMode mode) {
  if (map.num_tokens() != matrix.size()) {
    throw Error(ErrorKind::InvalidArgument, "sentence map covers " + std::to_string(map.num_tokens()) +
                                                " tokens but the matrix has " + std::to_string(matrix.size()));
  }
  SentenceAttentionMatrix out(map.num_sentences(), mode);
  for (std::size_t from = 0; from < out.size(); ++from) {
    for (std::size_t to = 0; to < out.size(); ++to) {
      if (from != to) out.set(from, to, sentence_sentence_score(matrix, from, to, map, mode));
    }
  }
  return out;
}

ContextWindow select_context(const SentenceAttentionMatrix& scores, std::size_t current,
                             std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "context size must be at least 1");
  if (current >= scores.size()) {
    throw Error(ErrorKind::InvalidArgument, "current sentence " + std::to_string(current) + " out of range");
  }
  struct Candidate {
    double score;
    std::size_t index;
  };
  std::vector<Candidate> candidates;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (s == current) continue;
    if (auto score = scores.at(current, s)) candidates.push_back({*score, s});
  }
  const std::size_t take = std::min(n, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), [](const Candidate& a, const Candidate& b) {
                      return a.score != b.score ? a.score > b.score : a.index < b.index;
                    });
  ContextWindow window{current, {}, n};
  for (std::size_t k = 0; k < take; ++k) window.members.push_back(candidates[k].index);
  std::sort(window.members.begin(), window.members.end());
  return window;
}

ContextWindow fixed_context(std::size_t current, std::size_t total, std::size_t before,
                            std::size_t after) {
  if (current >= total) {
    throw Error(ErrorKind::InvalidArgument, "current sentence " + std::to_string(current) + " out of range");
  }
  ContextWindow window{current, {}, before + after};
  const std::size_t first = current >= before ? current - before : 0;
  const std::size_t last = std::min(total - 1, current + after);
  for (std::size_t s = first; s <= last; ++s) {
    if (s != current) window.members.push_back(s);
  }
  return window;
}

}  // namespace cap::attention
