#include "cap/capabilities.hpp"

#include <string>

#include "cap/error.hpp"

namespace cap {

void AttentionResponse::validate(std::size_t input_size) const {
  if (tokens.size() != tensor.tokens()) {
    throw Error(ErrorKind::InvalidTensor, std::to_string(tokens.size()) + " tokens but tensor covers " +
                                              std::to_string(tensor.tokens()));
  }
  std::size_t cursor = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto& range = tokens[t].range;
    if (range.end < range.begin || range.end > input_size) {
      throw Error(ErrorKind::InvalidTensor, "token " + std::to_string(t) + " range lies outside the input");
    }
    if (range.empty()) continue;
    if (range.begin < cursor) {
      throw Error(ErrorKind::InvalidTensor, "token " + std::to_string(t) + " range overlaps or goes backwards");
    }
    cursor = range.end;
  }
  tensor.validate();
}

}  // namespace cap
