#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Each oracle is written from the formula, without calling the code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cap/attention.hpp"
#include "cap/capabilities.hpp"

namespace cap::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(CAP_FIXTURES_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Dense [h][i][j] view, independent of the tensor's storage order.
using Cube = std::vector<std::vector<std::vector<double>>>;
using Square = std::vector<std::vector<double>>;

struct RandomCase {
  attention::AttentionTensor tensor;
  Cube weights;
  std::vector<std::optional<std::size_t>> assignment;
  std::size_t sentences = 0;
};

// Random causal tensor with row-stochastic heads, a BOS token mapped to no
// sentence and 1..max_sentences contiguous sentences over the rest.
inline RandomCase random_case(std::mt19937_64& rng, std::size_t max_heads, std::size_t max_tokens,
                              std::size_t max_sentences) {
  std::uniform_int_distribution<std::size_t> heads_dist(1, max_heads);
  const std::size_t heads = heads_dist(rng);
  std::uniform_int_distribution<std::size_t> tokens_dist(2, max_tokens);
  const std::size_t tokens = tokens_dist(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RandomCase c;
  c.weights.assign(heads, Square(tokens, std::vector<double>(tokens, 0.0)));
  std::vector<double> flat(heads * tokens * tokens, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < tokens; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        // Occasional exact ties and zeros.
        const double u = unit(rng);
        c.weights[h][i][j] = u < 0.1 ? 0.0 : (u < 0.25 ? 0.5 : u);
        sum += c.weights[h][i][j];
      }
      if (sum == 0.0) {
        c.weights[h][i][i] = 1.0;
        sum = 1.0;
      }
      for (std::size_t j = 0; j <= i; ++j) {
        c.weights[h][i][j] /= sum;
        flat[(h * tokens + i) * tokens + j] = c.weights[h][i][j];
      }
    }
  }
  c.tensor = attention::AttentionTensor(heads, tokens, true, std::move(flat));

  const std::size_t content = tokens - 1;
  std::uniform_int_distribution<std::size_t> sent_dist(1, std::min(max_sentences, content));
  c.sentences = sent_dist(rng);
  // Cut points: choose sentences-1 distinct boundaries among content-1 gaps.
  std::vector<std::size_t> gaps(content - 1);
  for (std::size_t g = 0; g < gaps.size(); ++g) gaps[g] = g + 1;
  std::shuffle(gaps.begin(), gaps.end(), rng);
  std::vector<std::size_t> cuts(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(c.sentences - 1));
  std::sort(cuts.begin(), cuts.end());
  c.assignment.assign(tokens, std::nullopt);
  std::size_t sentence = 0;
  for (std::size_t t = 0; t < content; ++t) {
    while (sentence < cuts.size() && t >= cuts[sentence]) ++sentence;
    c.assignment[t + 1] = sentence;
  }
  return c;
}

inline Square oracle_average_heads(const Cube& w) {
  const std::size_t n = w.front().size();
  Square out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t h = 0; h < w.size(); ++h) s += w[h][i][j];
      out[i][j] = s / static_cast<double>(w.size());
    }
  }
  return out;
}

inline std::optional<double> oracle_token_sentence(const Square& m, std::size_t i, std::size_t s,
                                                   const std::vector<std::optional<std::size_t>>& assignment,
                                                   bool use_max) {
  double best = -1.0;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k <= i && k < m.size(); ++k) {
    if (assignment[k] != s) continue;
    best = std::max(best, m[i][k]);
    sum += m[i][k];
    ++count;
  }
  if (count == 0) return std::nullopt;
  return use_max ? best : sum / static_cast<double>(count);
}

inline std::optional<double> oracle_sentence_sentence(const Square& m, std::size_t from, std::size_t to,
                                                      const std::vector<std::optional<std::size_t>>& assignment,
                                                      bool use_max) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (assignment[i] != from) continue;
    if (auto ts = oracle_token_sentence(m, i, to, assignment, use_max)) {
      sum += *ts;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

// Sorts every present candidate by (score desc, index asc), keeps n, then
// restores document order.
inline std::vector<std::size_t> oracle_select(const std::vector<std::optional<double>>& row, std::size_t current,
                                              std::size_t n) {
  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t s = 0; s < row.size(); ++s) {
    if (s != current && row[s]) candidates.emplace_back(*row[s], s);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (candidates.size() > n) candidates.resize(n);
  std::vector<std::size_t> out;
  for (const auto& c : candidates) out.push_back(c.second);
  std::sort(out.begin(), out.end());
  return out;
}

// Exhaustive-scan ranking: (score desc, id asc), first k.
inline std::vector<std::uint64_t> oracle_scan(const std::vector<std::vector<float>>& vectors,
                                              const std::vector<std::uint64_t>& ids, const std::vector<float>& query,
                                              std::size_t k) {
  std::vector<std::pair<double, std::uint64_t>> scored;
  for (std::size_t e = 0; e < vectors.size(); ++e) {
    double dot = 0.0;
    for (std::size_t d = 0; d < query.size(); ++d) dot += static_cast<double>(vectors[e][d]) * query[d];
    scored.emplace_back(dot, ids[e]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::uint64_t> out;
  for (std::size_t r = 0; r < std::min(k, scored.size()); ++r) out.push_back(scored[r].second);
  return out;
}

// A second BLEU-4: ASCII-only tokenizer that splits off punctuation,
// n-grams keyed by their joined text, clipping via std::map.
inline std::vector<std::string> oracle_bleu_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(cur), cur.clear();
    } else if (std::ispunct(c)) {
      if (!cur.empty()) out.push_back(cur), cur.clear();
      out.emplace_back(1, ch);
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double oracle_bleu(const std::vector<std::string>& hyp_docs, const std::vector<std::string>& ref_docs) {
  double log_precision = 0.0;
  std::size_t c = 0;
  std::size_t r = 0;
  std::vector<double> matches(5, 0.0), totals(5, 0.0);
  for (std::size_t d = 0; d < hyp_docs.size(); ++d) {
    const auto h = oracle_bleu_tokens(hyp_docs[d]);
    const auto rf = oracle_bleu_tokens(ref_docs[d]);
    c += h.size();
    r += rf.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::string, int> hc, rc;
      for (std::size_t i = 0; i + n <= h.size(); ++i) {
        std::string key;
        for (std::size_t t = 0; t < n; ++t) key += h[i + t] + '\x1f';
        ++hc[key];
      }
      for (std::size_t i = 0; i + n <= rf.size(); ++i) {
        std::string key;
        for (std::size_t t = 0; t < n; ++t) key += rf[i + t] + '\x1f';
        ++rc[key];
      }
      for (const auto& [key, count] : hc) {
        totals[n] += count;
        const auto it = rc.find(key);
        if (it != rc.end()) matches[n] += std::min(count, it->second);
      }
    }
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    const double p = n == 1 ? matches[n] / totals[n] : (matches[n] + 1.0) / (totals[n] + 1.0);
    if (p == 0.0) return 0.0;
    log_precision += std::log(p) / 4.0;
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return 100.0 * bp * std::exp(log_precision);
}

// Backend double with scripted replies and call counters.
class ScriptedBackend : public Backend {
 public:
  std::function<std::string(const GenerationRequest&)> on_generate = [](const GenerationRequest&) {
    return std::string("output");
  };
  std::function<std::vector<float>(const std::string&)> on_embed = [](const std::string& text) {
    std::vector<float> v(8, 0.0f);
    for (std::size_t i = 0; i < text.size(); ++i) v[i % 8] += static_cast<float>(static_cast<unsigned char>(text[i]));
    return v;
  };
  std::function<AttentionResponse(const std::string&)> on_attention;

  std::size_t generate_calls = 0;
  std::size_t embed_calls = 0;
  std::size_t attention_calls = 0;
  std::vector<GenerationRequest> requests;

  std::string generate(const GenerationRequest& request) override {
    ++generate_calls;
    requests.push_back(request);
    return on_generate(request);
  }
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    ++embed_calls;
    std::vector<std::vector<float>> out;
    for (const auto& t : texts) out.push_back(on_embed(t));
    return out;
  }
  AttentionResponse attention(const std::string& text) override {
    ++attention_calls;
    return on_attention(text);
  }
};

}  // namespace cap::testing
