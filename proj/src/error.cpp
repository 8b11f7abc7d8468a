#include "cap/error.hpp"

#include <utility>

namespace cap {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::ZeroLengthPair: return "ZeroLengthPair";
    case ErrorKind::CorpusFormat: return "CorpusFormat";
    case ErrorKind::InvalidTensor: return "InvalidTensor";
    case ErrorKind::SelfScore: return "SelfScore";
    case ErrorKind::IndexBuild: return "IndexBuildError";
    case ErrorKind::EmptyDatastore: return "EmptyDatastore";
    case ErrorKind::QueryDimension: return "QueryDimensionError";
    case ErrorKind::InsufficientEntries: return "InsufficientEntries";
    case ErrorKind::IndexFormat: return "IndexFormatError";
    case ErrorKind::BackendTimeout: return "BackendTimeout";
    case ErrorKind::BackendProtocol: return "BackendProtocolError";
    case ErrorKind::ReplayMiss: return "ReplayMiss";
    case ErrorKind::ContextLengthExceeded: return "ContextLengthExceeded";
    case ErrorKind::Template: return "TemplateError";
    case ErrorKind::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorKind::Alignment: return "AlignmentError";
    case ErrorKind::Config: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, std::string message)
    : kind_(kind), what_(std::string(to_string(kind)) + ": " + std::move(message)) {}

void Error::add_context(std::string_view context) {
  what_ += " (";
  what_ += context;
  what_ += ")";
}

ReplayMiss::ReplayMiss(std::string hash, std::string route)
    : Error(ErrorKind::ReplayMiss, "no recorded response for " + route + " request " + hash),
      hash_(std::move(hash)) {}

ContextLengthExceeded::ContextLengthExceeded(std::size_t limit, std::size_t requested)
    : Error(ErrorKind::ContextLengthExceeded,
            "input of " + std::to_string(requested) + " exceeds backend limit " +
                std::to_string(limit)),
      limit_(limit) {}

IndexFormatError::IndexFormatError(std::uint64_t offset, std::string message)
    : Error(ErrorKind::IndexFormat, "at byte " + std::to_string(offset) + ": " + std::move(message)),
      offset_(offset) {}

CorpusFormatError::CorpusFormatError(std::size_t line, std::string message)
    : Error(ErrorKind::CorpusFormat, "line " + std::to_string(line) + ": " + std::move(message)),
      line_(line) {}

}  // namespace cap
