#include "tfz/errors.hpp"

namespace tfz {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::AllMaskedRow: return "AllMaskedRow";
    case ErrorKind::NotScalarLoss: return "NotScalarLoss";
    case ErrorKind::IndivisibleResolution: return "IndivisibleResolution";
    case ErrorKind::IndivisibleFrames: return "IndivisibleFrames";
    case ErrorKind::IndivisibleTokens: return "IndivisibleTokens";
    case ErrorKind::DoublePositioning: return "DoublePositioning";
    case ErrorKind::NonSquareGrid: return "NonSquareGrid";
    case ErrorKind::OddGridSide: return "OddGridSide";
    case ErrorKind::ScopeMismatch: return "ScopeMismatch";
    case ErrorKind::NonIntegralBudget: return "NonIntegralBudget";
    case ErrorKind::SequenceTooLong: return "SequenceTooLong";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::ZeroDuration: return "ZeroDuration";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::UnknownParameter: return "UnknownParameter";
    case ErrorKind::MissingParameter: return "MissingParameter";
    case ErrorKind::Io: return "Io";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace tfz
