#include "tfz/model/compressor.hpp"

#include <cmath>

#include "tfz/errors.hpp"
#include "tfz/model/layers.hpp"
#include "tfz/numerics/rng.hpp"

namespace tfz {

namespace {

std::size_t grid_side(std::size_t tokens) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (side * side != tokens) throw Error(ErrorKind::NonSquareGrid, std::to_string(tokens) + " tokens per frame");
  if (side % 2 != 0) throw Error(ErrorKind::OddGridSide, "grid side " + std::to_string(side));
  return side;
}

std::size_t prefix_size(const Shape& s, std::size_t trailing) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + trailing < s.size(); ++i) n *= s[i];
  return n;
}

Shape with_tail(const Shape& s, std::size_t drop, std::initializer_list<std::size_t> tail) {
  Shape out(s.begin(), s.end() - static_cast<std::ptrdiff_t>(drop));
  out.insert(out.end(), tail);
  return out;
}

// [.., G, k*T, h] -> [.., G, T, k*h]: in-group frames side by side per position.
Var stack_frames_on_hidden(Var grouped, std::size_t k) {
  const Shape& s = grouped.shape();
  if (s.size() < 3 || k == 0 || s[s.size() - 2] % k != 0) {
    throw Error(ErrorKind::IndivisibleTokens, shape_str(s) + " into groups of " + std::to_string(k) + " frames");
  }
  const std::size_t P = prefix_size(s, 2), T = s[s.size() - 2] / k, h = s.back();
  Var x = permute(reshape(grouped, {P, k, T, h}), {0, 2, 1, 3});
  return reshape(x, with_tail(s, 2, {T, k * h}));
}

}  // namespace

TokenBudget token_budget(std::size_t n_input, std::size_t l, std::size_t k) {
  if (k == 0 || n_input == 0 || l == 0 || (n_input * l) % k != 0) {
    throw Error(ErrorKind::NonIntegralBudget, "N_input=" + std::to_string(n_input) + " l=" + std::to_string(l) +
                                                  " k=" + std::to_string(k));
  }
  return TokenBudget{n_input, l, k, n_input * l / k};
}

std::size_t downsampled_tokens(std::size_t tokens_per_frame) {
  const std::size_t side = grid_side(tokens_per_frame);
  return (side / 2) * (side / 2);
}

Var spatial_downsample_with_proj(Var tokens, Var w, Var b) {
  const Shape& s = tokens.shape();
  if (s.size() < 2) throw Error(ErrorKind::ShapeMismatch, "downsample input " + shape_str(s));
  const std::size_t T = s[s.size() - 2], h = s.back(), side = grid_side(T), half = side / 2;
  const std::size_t P = prefix_size(s, 2);
  // [P, row-pair, row-in-window, col-pair, col-in-window, h] -> windows row-major.
  Var x = reshape(tokens, {P, half, 2, half, 2, h});
  x = permute(x, {0, 1, 3, 2, 4, 5});
  x = reshape(x, with_tail(s, 2, {half * half, 4 * h}));
  return linear(x, w, b);
}

Var te_concat_and_project(Var grouped, std::size_t k, Var w, Var b) {
  return spatial_downsample_with_proj(stack_frames_on_hidden(grouped, k), w, b);
}

Var kangaroo_temporal_mlp(Var grouped, std::size_t k, Var w1, Var b1, Var w2, Var b2, Var proj_w, Var proj_b) {
  Var x = stack_frames_on_hidden(grouped, k);
  x = linear(gelu(linear(x, w1, b1)), w2, b2);
  return spatial_downsample_with_proj(x, proj_w, proj_b);
}

Var pllava_temporal_pool(Var per_frame, std::size_t k) {
  const Shape& s = per_frame.shape();
  if (s.size() < 3) throw Error(ErrorKind::ShapeMismatch, "pooling input " + shape_str(s));
  const std::size_t F = s[s.size() - 3];
  if (k == 0 || F % k != 0) throw Error(ErrorKind::IndivisibleFrames, std::to_string(F) + " frames by k=" + std::to_string(k));
  const std::size_t P = prefix_size(s, 3), l = s[s.size() - 2], out = s.back();
  Var pooled = mean_over_axis(reshape(per_frame, {P, F / k, k, l, out}), 2);
  return reshape(pooled, with_tail(s, 3, {F / k, l, out}));
}

Var qformer_compress(ParamBinding& p, Var per_frame, const CompressorConfig& cfg, std::vector<Tensor>* cross_weights,
                     const std::string& prefix) {
  const Shape& s = per_frame.shape();
  if (s.size() != 4) throw Error(ErrorKind::ShapeMismatch, "qformer input " + shape_str(s));
  const std::size_t B = s[0], F = s[1], l = s[2], width = s[3], k = cfg.k;
  if (k == 0 || F % k != 0) throw Error(ErrorKind::IndivisibleFrames, std::to_string(F) + " frames by k=" + std::to_string(k));
  Var queries = p(prefix + ".queries");
  if (queries.shape() != Shape{l, width}) {
    throw Error(ErrorKind::ShapeMismatch, "qformer queries " + shape_str(queries.shape()) + " for " + std::to_string(l) +
                                              " tokens per frame");
  }
  const std::size_t windows = B * (F / k);
  Var kv = reshape(per_frame, {windows, k * l, width});
  Var q = expand_prefix(queries, {windows});
  AttentionOptions self_opt;
  self_opt.heads = cfg.qformer_heads;
  for (std::size_t i = 0; i < cfg.qformer_layers; ++i) {
    const std::string b = prefix + ".b" + std::to_string(i);
    Var hn = rms_norm(q, p(b + ".n1.g"), cfg.norm_eps);
    q = add(q, multi_head_attention(p, b + ".self", hn, hn, self_opt));
    AttentionOptions cross_opt = self_opt;
    Tensor w;
    if (cross_weights) cross_opt.weights_out = &w;
    hn = rms_norm(q, p(b + ".n2.g"), cfg.norm_eps);
    q = add(q, multi_head_attention(p, b + ".cross", hn, kv, cross_opt));
    if (cross_weights) cross_weights->push_back(std::move(w));
    hn = rms_norm(q, p(b + ".n3.g"), cfg.norm_eps);
    q = add(q, feed_forward(p, b + ".ffn", hn));
  }
  return reshape(q, {B, F / k, l, width});
}

void add_compressor_params(ParamSet& ps, const CompressorConfig& cfg, std::size_t encoder_hidden, std::size_t l, Rng& rng) {
  const std::size_t h = encoder_hidden, out = cfg.out_hidden;
  const std::size_t merged = cfg.method == FusionMethod::ThroughEncoder ? cfg.k * h : h;
  ps.add_normal("cmp.down.w", {4 * merged, out}, rng, kInitStd);
  ps.add_zeros("cmp.down.b", {out});
  if (cfg.method == FusionMethod::PostMLPKangaroo) {
    ps.add_normal("cmp.mlp.w1", {cfg.k * h, h}, rng, kInitStd);
    ps.add_zeros("cmp.mlp.b1", {h});
    ps.add_normal("cmp.mlp.w2", {h, h}, rng, kInitStd);
    ps.add_zeros("cmp.mlp.b2", {h});
  }
  if (cfg.method == FusionMethod::PostQFormer) {
    if (cfg.qformer_queries != l) {
      throw Error(ErrorKind::BadConfig, "qformer queries " + std::to_string(cfg.qformer_queries) + " != l " + std::to_string(l));
    }
    if (cfg.qformer_heads == 0 || out % cfg.qformer_heads != 0) {
      throw Error(ErrorKind::BadConfig, "qformer width " + std::to_string(out) + " by " + std::to_string(cfg.qformer_heads) + " heads");
    }
    ps.add_normal("cmp.qf.queries", {l, out}, rng, kInitStd);
    for (std::size_t i = 0; i < cfg.qformer_layers; ++i) {
      const std::string b = "cmp.qf.b" + std::to_string(i);
      ps.add_ones(b + ".n1.g", {out});
      add_attention_params(ps, b + ".self", out, rng);
      ps.add_ones(b + ".n2.g", {out});
      add_attention_params(ps, b + ".cross", out, rng);
      ps.add_ones(b + ".n3.g", {out});
      add_ffn_params(ps, b + ".ffn", out, 2 * out, rng);
    }
  }
}

void init_kangaroo_identity(ParamSet& ps, std::size_t encoder_hidden, std::size_t k, double shift) {
  const std::size_t h = encoder_hidden;
  Tensor w1({k * h, h}), w2({h, h});
  for (std::size_t i = 0; i < h; ++i) {
    w1[i * h + i] = 1.0;
    w2[i * h + i] = 1.0;
  }
  ps.at("cmp.mlp.w1") = std::move(w1);
  ps.at("cmp.mlp.b1") = Tensor::full({h}, shift);
  ps.at("cmp.mlp.w2") = std::move(w2);
  ps.at("cmp.mlp.b2") = Tensor::full({h}, -shift);
}

Var compress(ParamBinding& p, Var encoded, EncoderScope scope, const CompressorConfig& cfg) {
  if (scope != required_scope(cfg.method)) {
    throw Error(ErrorKind::ScopeMismatch, std::string(method_name(cfg.method)) + " needs a " +
                                              (required_scope(cfg.method) == EncoderScope::PerGroup ? "per-group" : "per-frame") +
                                              " encoder");
  }
  const Shape s = encoded.shape();
  if (s.size() != 4) throw Error(ErrorKind::ShapeMismatch, "encoder output must be [B, F, T, h], got " + shape_str(s));
  const std::size_t B = s[0], F = s[1], T = s[2], h = s[3], k = cfg.k;
  const bool groups_frames = cfg.method == FusionMethod::PostMLPKangaroo || cfg.method == FusionMethod::ThroughEncoder ||
                             cfg.method == FusionMethod::PostPoolPLLaVA || cfg.method == FusionMethod::PostQFormer;
  if (groups_frames && (k == 0 || F % k != 0)) {
    throw Error(ErrorKind::IndivisibleFrames, std::to_string(F) + " frames by k=" + std::to_string(k));
  }
  Var dw = p("cmp.down.w"), db = p("cmp.down.b");
  switch (cfg.method) {
    case FusionMethod::Baseline:
    case FusionMethod::PreEncoderChannelMerge:
      return spatial_downsample_with_proj(encoded, dw, db);
    case FusionMethod::PostPoolPLLaVA:
      return pllava_temporal_pool(spatial_downsample_with_proj(encoded, dw, db), k);
    case FusionMethod::PostQFormer:
      return qformer_compress(p, spatial_downsample_with_proj(encoded, dw, db), cfg);
    case FusionMethod::PostMLPKangaroo:
      return kangaroo_temporal_mlp(reshape(encoded, {B, F / k, k * T, h}), k, p("cmp.mlp.w1"), p("cmp.mlp.b1"),
                                   p("cmp.mlp.w2"), p("cmp.mlp.b2"), dw, db);
    case FusionMethod::ThroughEncoder:
      return te_concat_and_project(reshape(encoded, {B, F / k, k * T, h}), k, dw, db);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown fusion method");
}

}  // namespace tfz
