#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <string>
#include <string_view>

namespace cap {

enum class ErrorKind {
  InvalidArgument,
  EmptyDocument,
  ZeroLengthPair,
  CorpusFormat,
  InvalidTensor,
  SelfScore,
  IndexBuild,
  EmptyDatastore,
  QueryDimension,
  InsufficientEntries,
  IndexFormat,
  BackendTimeout,
  BackendProtocol,
  ReplayMiss,
  ContextLengthExceeded,
  Template,
  EmptyEvalSet,
  Alignment,
  Config,
};

std::string_view to_string(ErrorKind kind);

// Base of every error raised by the toolkit. The message can be extended
// with context while the exception propagates; catch by reference, call
// add_context() and rethrow with `throw;` to keep the dynamic type.
class Error : public std::exception {
 public:
  Error(ErrorKind kind, std::string message);

  ErrorKind kind() const noexcept { return kind_; }
  const char* what() const noexcept override { return what_.c_str(); }

  void add_context(std::string_view context);

 private:
  ErrorKind kind_;
  std::string what_;
};

class ReplayMiss : public Error {
 public:
  ReplayMiss(std::string hash, std::string route);
  const std::string& hash() const noexcept { return hash_; }

 private:
  std::string hash_;
};

class ContextLengthExceeded : public Error {
 public:
  ContextLengthExceeded(std::size_t limit, std::size_t requested);
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t limit_;
};

class IndexFormatError : public Error {
 public:
  IndexFormatError(std::uint64_t offset, std::string message);
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class CorpusFormatError : public Error {
 public:
  CorpusFormatError(std::size_t line, std::string message);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cap
