#include "clusterscope/error.hpp"

namespace clusterscope {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Structural: return "structural";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::Naming: return "naming";
    case ErrorCode::NameResolution: return "name_resolution";
    case ErrorCode::Syntax: return "syntax";
    case ErrorCode::Type: return "type";
    case ErrorCode::Dimension: return "dimension";
    case ErrorCode::InsufficientData: return "insufficient_data";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::Parameter: return "parameter";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::UndefinedTest: return "undefined_test";
    case ErrorCode::Cancelled: return "cancelled";
  }
  return "unknown";
}

namespace {

std::string describe(const std::vector<std::string>& names) {
  std::string msg = "unknown feature";
  if (names.size() > 1) msg += 's';
  msg += ": ";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) msg += ", ";
    msg += names[i];
  }
  return msg;
}

}  // namespace

NameResolutionError::NameResolutionError(std::vector<std::string> names)
    : Error(ErrorCode::NameResolution, describe(names)), names_(std::move(names)) {}

}  // namespace clusterscope
