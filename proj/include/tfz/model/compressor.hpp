#pragma once

#include <string>
#include <vector>

#include "tfz/model/fusion.hpp"
#include "tfz/numerics/ops.hpp"
#include "tfz/numerics/params.hpp"

namespace tfz {

class Rng;

struct TokenBudget {
  std::size_t n_input = 0;
  std::size_t per_frame_tokens = 0;  // l
  std::size_t ratio = 1;             // k
  std::size_t l_decoder = 0;

  friend bool operator==(const TokenBudget&, const TokenBudget&) = default;
};

/// L_decoder = n_input * l / k; throws NonIntegralBudget when k does not divide n_input * l.
TokenBudget token_budget(std::size_t n_input, std::size_t l, std::size_t k);

/// Effective ratio: Baseline never compresses.
constexpr std::size_t effective_ratio(FusionMethod m, std::size_t k) { return m == FusionMethod::Baseline ? 1 : k; }

/// Tokens per frame after the 2x2 spatial downsample; throws NonSquareGrid / OddGridSide.
std::size_t downsampled_tokens(std::size_t tokens_per_frame);

struct CompressorConfig {
  FusionMethod method = FusionMethod::Baseline;
  std::size_t k = 1;
  std::size_t out_hidden = 32;
  std::size_t qformer_queries = 4;  // must equal l
  std::size_t qformer_layers = 2;
  std::size_t qformer_heads = 4;
  double norm_eps = 1e-6;
};

/// Concatenates each 2x2 window of the square token grid (row-major inside the
/// window) and projects: [.., T, h] -> [.., T/4, out] with w [4h, out].
Var spatial_downsample_with_proj(Var tokens, Var w, Var b);

/// Per spatial position the k in-group frames concatenate along hidden, then
/// 2x2 windows concatenate and project: [.., G, k*T, h] -> [.., G, T/4, out], w [4kh, out].
Var te_concat_and_project(Var grouped, std::size_t k, Var w, Var b);

/// Per spatial position the k frames concatenate to k*h, pass a gelu
/// perceptron back to h, then the 2x2 downsample: [.., G, k*T, h] -> [.., G, T/4, out].
Var kangaroo_temporal_mlp(Var grouped, std::size_t k, Var w1, Var b1, Var w2, Var b2, Var proj_w, Var proj_b);

/// Mean over each window of k consecutive frames: [.., F, l, out] -> [.., F/k, l, out].
Var pllava_temporal_pool(Var per_frame, std::size_t k);

/// Learned queries `<prefix>.queries` [l, out] attend to each window of k
/// frames through `layers` blocks of self-attention, cross-attention and
/// feed-forward: [B, F, l, out] -> [B, F/k, l, out]. When `cross_weights` is
/// set it receives each block's cross-attention weights [B*F/k, heads, l, k*l].
Var qformer_compress(ParamBinding& p, Var per_frame, const CompressorConfig& cfg,
                     std::vector<Tensor>* cross_weights = nullptr, const std::string& prefix = "cmp.qf");

/// Parameters `cmp.*` for the configured method given encoder width h and
/// per-frame decoder tokens l.
void add_compressor_params(ParamSet& ps, const CompressorConfig& cfg, std::size_t encoder_hidden, std::size_t l, Rng& rng);

/// Makes the Kangaroo perceptron pass the first in-group frame through:
/// w1 = [I; 0], b1 = +shift, w2 = I, b2 = -shift. With shift large enough that
/// gelu is the identity on the shifted range, k=1 reduces to the baseline path.
void init_kangaroo_identity(ParamSet& ps, std::size_t encoder_hidden, std::size_t k, double shift = 32.0);

/// Dispatches on cfg.method. `encoded` is the encoder output [B, F, T, h] and
/// `scope` the scope it was produced under; result [B, F/k', l, out].
Var compress(ParamBinding& p, Var encoded, EncoderScope scope, const CompressorConfig& cfg);

}  // namespace tfz
