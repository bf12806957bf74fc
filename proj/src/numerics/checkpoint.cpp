#include "tfz/numerics/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "../binary_io.hpp"
#include "tfz/errors.hpp"

namespace tfz {

using detail::get_le;
using detail::put_le;

namespace {

constexpr std::array<char, 4> kMagic{'T', 'F', 'Z', '1'};

}  // namespace

void write_checkpoint(std::ostream& out, const ParamSet& params) {
  out.write(kMagic.data(), kMagic.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.names()[i];
    const Tensor& t = params.value(i);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
}

ParamSet read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) throw Error(ErrorKind::BadMagic, "expected TFZ1 header");
  ParamSet params;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get_le<std::uint32_t>(in, "parameter name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw Error(ErrorKind::TruncatedFile, "parameter name");
    const auto rank = get_le<std::uint32_t>(in, name.c_str());
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(get_le<std::uint64_t>(in, name.c_str()));
    Tensor t(shape);
    for (auto& v : t.data()) v = std::bit_cast<double>(get_le<std::uint64_t>(in, name.c_str()));
    params.add(name, std::move(t));
  }
  return params;
}

void save_checkpoint(const ParamSet& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_checkpoint(out, params);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  return read_checkpoint(in);
}

void assign_checkpoint(ParamSet& into, const ParamSet& loaded) {
  for (const auto& name : loaded.names()) {
    if (!into.contains(name)) throw Error(ErrorKind::UnknownParameter, name);
  }
  for (const auto& name : into.names()) {
    if (!loaded.contains(name)) throw Error(ErrorKind::MissingParameter, name);
    const Tensor& src = loaded.at(name);
    Tensor& dst = into.at(name);
    if (src.shape() != dst.shape()) {
      throw Error(ErrorKind::ShapeMismatch, name + ": " + shape_str(src.shape()) + " vs " + shape_str(dst.shape()));
    }
    dst = src;
  }
}

}  // namespace tfz
