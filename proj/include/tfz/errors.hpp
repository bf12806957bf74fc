#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tfz {

enum class ErrorKind {
  ShapeMismatch,
  AllMaskedRow,
  NotScalarLoss,
  IndivisibleResolution,
  IndivisibleFrames,
  IndivisibleTokens,
  DoublePositioning,
  NonSquareGrid,
  OddGridSide,
  ScopeMismatch,
  NonIntegralBudget,
  SequenceTooLong,
  BadConfig,
  ZeroDuration,
  DivergedLoss,
  SchemaMismatch,
  BadMagic,
  TruncatedFile,
  UnknownParameter,
  MissingParameter,
  Io,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Numerical failures map to CLI exit code 2, everything else to 1.
  bool is_numerical() const noexcept { return kind_ == ErrorKind::DivergedLoss; }

 private:
  ErrorKind kind_;
};

}  // namespace tfz
