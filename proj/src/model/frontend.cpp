#include "tfz/model/frontend.hpp"

#include <array>
#include <bit>
#include <fstream>

#include "../binary_io.hpp"
#include "tfz/errors.hpp"

namespace tfz {

namespace {

constexpr std::array<char, 4> kClipMagic{'C', 'L', 'P', '1'};

void check_video_batch(const Tensor& pixels) {
  if (pixels.rank() != 5) {
    throw Error(ErrorKind::ShapeMismatch, "expected pixels [B, F, C, H, W], got " + shape_str(pixels.shape()));
  }
}

}  // namespace

VideoClip::VideoClip(Tensor px) : pixels(std::move(px)) {
  if (pixels.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "clip pixels must be [F, C, H, W], got " + shape_str(pixels.shape()));
}

Tensor stack_clips(std::span<const VideoClip> clips) {
  if (clips.empty()) throw Error(ErrorKind::InvalidArgument, "no clips to stack");
  const Shape& one = clips[0].pixels.shape();
  Shape s{clips.size()};
  s.insert(s.end(), one.begin(), one.end());
  Tensor out(s);
  const std::size_t n = clips[0].pixels.size();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].pixels.shape() != one) {
      throw Error(ErrorKind::ShapeMismatch, "clip " + shape_str(clips[i].pixels.shape()) + " vs " + shape_str(one));
    }
    std::copy_n(clips[i].pixels.ptr(), n, out.ptr() + i * n);
  }
  return out;
}

Tensor extract_patches(const Tensor& pixels, std::size_t patch) {
  check_video_batch(pixels);
  const Shape& s = pixels.shape();
  const std::size_t B = s[0], F = s[1], C = s[2], H = s[3], W = s[4];
  if (patch == 0 || H % patch != 0 || W % patch != 0) {
    throw Error(ErrorKind::IndivisibleResolution,
                std::to_string(H) + "x" + std::to_string(W) + " by patch " + std::to_string(patch));
  }
  const std::size_t ph = H / patch, pw = W / patch, T = ph * pw, feat = C * patch * patch;
  Tensor out({B, F, T, feat});
  const double* src = pixels.ptr();
  double* dst = out.ptr();
  for (std::size_t bf = 0; bf < B * F; ++bf) {
    const double* frame = src + bf * C * H * W;
    for (std::size_t pr = 0; pr < ph; ++pr) {
      for (std::size_t pc = 0; pc < pw; ++pc) {
        double* tok = dst + (bf * T + pr * pw + pc) * feat;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < patch; ++y) {
            const double* row = frame + (c * H + pr * patch + y) * W + pc * patch;
            std::copy_n(row, patch, tok + (c * patch + y) * patch);
          }
        }
      }
    }
  }
  return out;
}

TokenGrid patchify(Tape& tape, const Tensor& pixels, std::size_t patch, Var w, Var b) {
  Var patches = tape.constant(extract_patches(pixels, patch));
  return TokenGrid{linear(patches, w, b), false};
}

TokenGrid patchify(Tape& tape, const VideoClip& clip, std::size_t patch, Var w, Var b) {
  return patchify(tape, stack_clips(std::span<const VideoClip>(&clip, 1)), patch, w, b);
}

Tensor merge_temporal_channels(const Tensor& pixels, std::size_t k) {
  check_video_batch(pixels);
  const Shape& s = pixels.shape();
  const std::size_t B = s[0], F = s[1], C = s[2], H = s[3], W = s[4];
  if (k == 0 || F % k != 0) {
    throw Error(ErrorKind::IndivisibleFrames, std::to_string(F) + " frames by k=" + std::to_string(k));
  }
  // Frame-major layout means k consecutive frames already sit back to back
  // as k*C channels; only the shape changes.
  return pixels.reshaped({B, F / k, C * k, H, W});
}

VideoClip merge_temporal_channels(const VideoClip& clip, std::size_t k) {
  const Shape& s = clip.pixels.shape();
  Tensor merged = merge_temporal_channels(clip.pixels.reshaped({1, s[0], s[1], s[2], s[3]}), k);
  const Shape& m = merged.shape();
  return VideoClip(std::move(merged).reshaped({m[1], m[2], m[3], m[4]}));
}

TokenGrid add_spatial_pos(const TokenGrid& grid, Var table) {
  if (grid.spatially_positioned) throw Error(ErrorKind::DoublePositioning, "spatial positions already added");
  const Shape expect{grid.tokens_per_frame(), grid.hidden()};
  if (table.shape() != expect) {
    throw Error(ErrorKind::ShapeMismatch, "spatial table " + shape_str(table.shape()) + ", expected " + shape_str(expect));
  }
  return TokenGrid{add(grid.tokens, table), true};
}

GroupedTokens merge_neighbor_frames(const TokenGrid& grid, std::size_t k, Var temporal_table) {
  const std::size_t B = grid.batch(), F = grid.frames(), T = grid.tokens_per_frame(), h = grid.hidden();
  if (k == 0 || F % k != 0) {
    throw Error(ErrorKind::IndivisibleFrames, std::to_string(F) + " frames by k=" + std::to_string(k));
  }
  if (!grid.spatially_positioned) throw Error(ErrorKind::InvalidArgument, "group frames after spatial positioning");
  const Shape expect{k, h};
  if (temporal_table.shape() != expect) {
    throw Error(ErrorKind::ShapeMismatch,
                "temporal table " + shape_str(temporal_table.shape()) + ", expected " + shape_str(expect));
  }
  Var per_token = permute(expand_prefix(temporal_table, {T}), {1, 0, 2});  // [k, T, h]
  Var grouped = add(reshape(grid.tokens, {B, F / k, k, T, h}), per_token);
  return GroupedTokens{reshape(grouped, {B, F / k, k * T, h}), k, true};
}

void write_clip(std::ostream& out, const VideoClip& clip) {
  out.write(kClipMagic.data(), kClipMagic.size());
  for (std::size_t e : clip.pixels.shape()) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  for (double v : clip.pixels.data()) {
    detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

VideoClip read_clip(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kClipMagic) throw Error(ErrorKind::BadMagic, "expected CLP1 header");
  Shape s(4);
  for (auto& e : s) {
    e = detail::get_le<std::uint32_t>(in, "clip header");
    if (e == 0) throw Error(ErrorKind::ShapeMismatch, "clip extent 0");
  }
  Tensor px(s);
  for (double& v : px.data()) v = std::bit_cast<float>(detail::get_le<std::uint32_t>(in, "clip pixels"));
  return VideoClip(std::move(px));
}

void save_clip(const VideoClip& clip, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_clip(out, clip);
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

VideoClip load_clip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  return read_clip(in);
}

}  // namespace tfz
