#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cofi {

// Machine-readable failure categories. The CLI maps each to a distinct exit code.
enum class ErrorKind {
  kDimension,
  kNumeric,
  kContract,
  kConfig,
  kParse,
  kCorruptFile,
  kIo,
  kDegenerateFeature,
  kDegenerateConfiguration,
  kInsufficientData,
  kEstimationFailure,
  kUndefinedMetric,
  kNoNegative,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kCorruptFile: return "corrupt_file";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kDegenerateFeature: return "degenerate_feature";
    case ErrorKind::kDegenerateConfiguration: return "degenerate_configuration";
    case ErrorKind::kInsufficientData: return "insufficient_data";
    case ErrorKind::kEstimationFailure: return "estimation_failure";
    case ErrorKind::kUndefinedMetric: return "undefined_metric";
    case ErrorKind::kNoNegative: return "no_negative";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace cofi
