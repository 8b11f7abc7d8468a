#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cap/attention.hpp"
#include "cap/corpus.hpp"

// The three model capabilities the toolkit consumes. Implementations live in
// cap/backend.hpp; algorithms depend only on these interfaces.
namespace cap {

struct GenerationRequest {
  std::string prompt;
  std::size_t max_new_tokens = 256;
  double temperature = 0.0;
  std::vector<std::string> stop;

  friend bool operator==(const GenerationRequest&, const GenerationRequest&) = default;
};

struct AttentionToken {
  std::string text;
  corpus::Span range;  // empty for special tokens

  friend bool operator==(const AttentionToken&, const AttentionToken&) = default;
};

struct AttentionResponse {
  std::vector<AttentionToken> tokens;
  attention::AttentionTensor tensor;

  // Checks token/tensor agreement, range ordering against an input of
  // `input_size` bytes and the tensor invariants. Throws InvalidTensor.
  void validate(std::size_t input_size) const;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string generate(const GenerationRequest& request) = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

class AttentionSource {
 public:
  virtual ~AttentionSource() = default;
  virtual AttentionResponse attention(const std::string& text) = 0;
};

class Backend : public Generator, public Embedder, public AttentionSource {};

}  // namespace cap
