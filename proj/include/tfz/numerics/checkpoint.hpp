#pragma once

#include <iosfwd>
#include <string>

#include "tfz/numerics/params.hpp"

namespace tfz {

// Binary layout: "TFZ1", then per parameter until EOF:
//   name length (u32 LE), UTF-8 name, rank (u32 LE), extents (u64 LE each),
//   values (f64 LE). No padding, no trailer.

void write_checkpoint(std::ostream& out, const ParamSet& params);
/// Reads every record in the stream. Throws BadMagic / TruncatedFile.
ParamSet read_checkpoint(std::istream& in);

void save_checkpoint(const ParamSet& params, const std::string& path);
ParamSet load_checkpoint(const std::string& path);

/// Copies checkpoint values into `into`, which fixes the expected names and
/// shapes. Throws UnknownParameter for names `into` lacks, MissingParameter
/// for names the checkpoint lacks, ShapeMismatch on extents.
void assign_checkpoint(ParamSet& into, const ParamSet& loaded);

}  // namespace tfz
