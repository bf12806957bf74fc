#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "tfz/numerics/ops.hpp"

namespace tfz {

/// Pixels [F, C, H, W] in [0, 1].
struct VideoClip {
  Tensor pixels;

  VideoClip() = default;
  explicit VideoClip(Tensor px);

  std::size_t frames() const { return pixels.extent(0); }
  std::size_t channels() const { return pixels.extent(1); }
  std::size_t height() const { return pixels.extent(2); }
  std::size_t width() const { return pixels.extent(3); }
};

/// Per-frame patch tokens [B, F, T, h].
struct TokenGrid {
  Var tokens;
  bool spatially_positioned = false;

  std::size_t batch() const { return tokens.shape()[0]; }
  std::size_t frames() const { return tokens.shape()[1]; }
  std::size_t tokens_per_frame() const { return tokens.shape()[2]; }
  std::size_t hidden() const { return tokens.shape()[3]; }
};

/// Neighbor-frame groups [B, G, k*T, h]; in-group frame j owns tokens [j*T, (j+1)*T).
struct GroupedTokens {
  Var tokens;
  std::size_t group_size = 1;
  bool temporally_positioned = false;

  std::size_t batch() const { return tokens.shape()[0]; }
  std::size_t groups() const { return tokens.shape()[1]; }
  std::size_t tokens_per_frame() const { return tokens.shape()[2] / group_size; }
  std::size_t hidden() const { return tokens.shape()[3]; }
};

/// Stacks clips of equal shape into [B, F, C, H, W].
Tensor stack_clips(std::span<const VideoClip> clips);

/// Flattened patch pixels [B, F, T, C*p*p]: patches in row-major scan order,
/// each flattened channel-first then row-major within the patch.
Tensor extract_patches(const Tensor& pixels, std::size_t patch);

/// Patches projected to hidden width: tokens = patches * w + b with w [C*p*p, h].
TokenGrid patchify(Tape& tape, const Tensor& pixels, std::size_t patch, Var w, Var b);
TokenGrid patchify(Tape& tape, const VideoClip& clip, std::size_t patch, Var w, Var b);

/// Output frame i stacks input frames i*k .. i*k+k-1 along channels, in temporal order.
Tensor merge_temporal_channels(const Tensor& pixels, std::size_t k);
VideoClip merge_temporal_channels(const VideoClip& clip, std::size_t k);

/// Adds table [T, h] to every frame. Throws DoublePositioning if already applied.
TokenGrid add_spatial_pos(const TokenGrid& grid, Var table);

/// Groups k adjacent frames along the token axis and adds temporal_table[j]
/// to every token of in-group frame j.
GroupedTokens merge_neighbor_frames(const TokenGrid& grid, std::size_t k, Var temporal_table);

// CLP1 clip files: magic, F, C, H, W as u32 LE, then f32 LE pixels.
void write_clip(std::ostream& out, const VideoClip& clip);
VideoClip read_clip(std::istream& in);
void save_clip(const VideoClip& clip, const std::string& path);
VideoClip load_clip(const std::string& path);

}  // namespace tfz
