#pragma once

#include <string>

#include "tfz/model/fusion.hpp"
#include "tfz/numerics/ops.hpp"
#include "tfz/numerics/params.hpp"

namespace tfz {

class Rng;

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 64;
  EncoderScope scope = EncoderScope::PerFrame;
  double norm_eps = 1e-6;

  void validate() const;
};

/// Block-diagonal attention pattern over a flattened token axis.
struct ScopeMask {
  std::size_t total = 0;
  std::size_t block = 0;
  Tensor mask;  // [total, total]: 0 inside a block, kernels::kMaskSentinel elsewhere

  bool allowed(std::size_t i, std::size_t j) const { return i / block == j / block; }
  std::size_t allowed_count() const { return total * block; }
};

/// Throws IndivisibleTokens unless block divides total.
ScopeMask build_scope_mask(std::size_t total_tokens, std::size_t block);

/// Parameters `<prefix>.l<i>.{norm1.g, attn.*, norm2.g, ffn.*}`.
void add_encoder_params(ParamSet& ps, const EncoderConfig& cfg, Rng& rng, const std::string& prefix = "enc");

/// Pre-norm transformer over tokens [N, S, h] (or [S, h]); every block
/// attends only within `mask`.
Var encode(ParamBinding& p, Var tokens, const EncoderConfig& cfg, const ScopeMask& mask,
           const std::string& prefix = "enc");

}  // namespace tfz
