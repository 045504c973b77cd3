#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ocon {

// Error names are part of the CLI contract (printed on stderr, mapped to
// exit codes). Append only; never reorder.
enum class Errc : int {
  UnknownGroupChar,
  NonNumericSpeakerId,
  UnknownPhonemeCode,
  MalformedFilename,
  MalformedRow,
  MissingColumn,
  UnusableRecord,
  ConstantColumn,
  DimensionMismatch,
  VersionMismatch,
  CorruptPayload,
  UnknownClass,
  EmptyFalseClass,
  BalanceToleranceExceeded,
  NonFiniteLoss,
  TooFewSamples,
  NonNumericHp,
  InvalidConfig,
  PartialEnsemble,
  ManifestMismatch,
  MissingMember,
  SingleClassInput,
  EmptyEvaluationSet,
  IoError,
  HashMismatch,
};

inline constexpr std::array<std::string_view, 25> kErrcNames = {
    "UnknownGroupChar",  "NonNumericSpeakerId", "UnknownPhonemeCode",
    "MalformedFilename", "MalformedRow",        "MissingColumn",
    "UnusableRecord",    "ConstantColumn",      "DimensionMismatch",
    "VersionMismatch",   "CorruptPayload",      "UnknownClass",
    "EmptyFalseClass",   "BalanceToleranceExceeded",
    "NonFiniteLoss",     "TooFewSamples",       "NonNumericHp",
    "InvalidConfig",     "PartialEnsemble",     "ManifestMismatch",
    "MissingMember",     "SingleClassInput",    "EmptyEvaluationSet",
    "IoError",           "HashMismatch",
};

inline constexpr std::string_view errc_name(Errc code) {
  return kErrcNames[static_cast<std::size_t>(code)];
}

/// Process exit code for an error: 10 + enum ordinal.
inline constexpr int exit_code(Errc code) { return 10 + static_cast<int>(code); }

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view name() const noexcept { return errc_name(code_); }

 private:
  Errc code_;
};

}  // namespace ocon
