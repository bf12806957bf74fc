#pragma once

#include <string>

#include "tfz/numerics/ops.hpp"
#include "tfz/numerics/params.hpp"

namespace tfz {

class Rng;

inline constexpr double kInitStd = 0.02;

/// Registers `<prefix>.wq/.wk/.wv` [width, width] and `<prefix>.wo` [width, width]
/// plus bias `<prefix>.bo`.
void add_attention_params(ParamSet& ps, const std::string& prefix, std::size_t width, Rng& rng);
/// Registers `<prefix>.w1` [width, hidden], `.b1`, `.w2` [hidden, width], `.b2`.
void add_ffn_params(ParamSet& ps, const std::string& prefix, std::size_t width, std::size_t hidden, Rng& rng);

struct AttentionOptions {
  std::size_t heads = 1;
  const Tensor* mask = nullptr;  // [Sq, Sk], shared across batch and heads
  double rope_base = 0.0;        // > 0 rotates queries and keys by position
  Tensor* weights_out = nullptr; // receives [N, heads, Sq, Sk]
};

/// Multi-head attention of xq [N, Sq, w] over xkv [N, Sk, w], output [N, Sq, w].
Var multi_head_attention(ParamBinding& p, const std::string& prefix, Var xq, Var xkv, const AttentionOptions& opt);

/// gelu feed-forward over the last axis.
Var feed_forward(ParamBinding& p, const std::string& prefix, Var x);

}  // namespace tfz
