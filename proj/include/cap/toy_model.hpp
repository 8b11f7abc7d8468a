#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cap/backend.hpp"

namespace cap::backend {

// A small deterministic model that implements all three routes of the wire
// protocol. It backs `cap-reference-server`, the `toy:` endpoint and the
// committed replay fixtures. It is not a translation model: generation
// copies the query, substituting words learned from the demonstrations in
// the prompt and from a small built-in German-English lexicon.
struct ToyModelOptions {
  std::size_t embedding_dim = 64;
  std::size_t heads = 2;
  std::size_t max_input_bytes = 16384;
};

class ToyModel {
 public:
  explicit ToyModel(ToyModelOptions options = {});

  Reply handle(std::string_view route, const nlohmann::json& request) const;

  std::string generate(const GenerationRequest& request) const;
  std::vector<float> embed(std::string_view text) const;
  AttentionResponse attention(std::string_view text) const;

  const ToyModelOptions& options() const { return options_; }

 private:
  ToyModelOptions options_;
};

class ToyTransport : public Transport {
 public:
  explicit ToyTransport(ToyModelOptions options = {}) : model_(options) {}
  Reply post(std::string_view route, const nlohmann::json& request) override {
    return model_.handle(route, request);
  }

 private:
  ToyModel model_;
};

}  // namespace cap::backend
