#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace clusterscope {

enum class ErrorCode {
  Structural,      // ragged CSV rows, bad encoding
  EmptyInput,
  Naming,          // duplicate feature names
  NameResolution,  // unknown identifier in a filter or request
  Syntax,
  Type,
  Dimension,
  InsufficientData,
  Numeric,
  Validation,
  Degenerate,
  Parameter,
  Domain,
  UndefinedTest,
  Cancelled,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the filter parser. `offset` is a byte offset into the input.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, std::string message, std::vector<std::string> expected)
      : Error(ErrorCode::Syntax, message), offset_(offset), expected_(std::move(expected)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class NameResolutionError : public Error {
 public:
  explicit NameResolutionError(std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
};

}  // namespace clusterscope
