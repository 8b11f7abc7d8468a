#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Minimal UTF-8 helpers. Offsets are byte offsets into the encoded string.
// Malformed sequences decode as U+FFFD spanning one byte so that scanning
// always makes progress.
namespace cap::utf8 {

struct CodePoint {
  char32_t value;
  std::size_t offset;
  std::size_t length;
};

CodePoint decode_at(std::string_view text, std::size_t offset);
std::vector<CodePoint> decode(std::string_view text);
std::size_t count(std::string_view text);
void append(std::string& out, char32_t cp);

bool is_space(char32_t cp);
bool is_punct(char32_t cp);

std::string ascii_lower(std::string_view text);

// Trims Unicode whitespace from both ends.
std::string_view trim(std::string_view text);

}  // namespace cap::utf8
