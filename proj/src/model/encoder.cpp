#include "tfz/model/encoder.hpp"

#include "tfz/errors.hpp"
#include "tfz/model/layers.hpp"
#include "tfz/numerics/kernels.hpp"

namespace tfz {

void EncoderConfig::validate() const {
  if (layers == 0 || hidden == 0 || heads == 0 || ffn_hidden == 0) throw Error(ErrorKind::BadConfig, "encoder extents must be >= 1");
  if (hidden % heads != 0) {
    throw Error(ErrorKind::BadConfig, "encoder hidden " + std::to_string(hidden) + " not divisible by " +
                                          std::to_string(heads) + " heads");
  }
}

ScopeMask build_scope_mask(std::size_t total_tokens, std::size_t block) {
  if (block == 0 || total_tokens == 0 || total_tokens % block != 0) {
    throw Error(ErrorKind::IndivisibleTokens,
                std::to_string(total_tokens) + " tokens into blocks of " + std::to_string(block));
  }
  ScopeMask m{total_tokens, block, Tensor({total_tokens, total_tokens})};
  for (std::size_t i = 0; i < total_tokens; ++i) {
    for (std::size_t j = 0; j < total_tokens; ++j) {
      if (!m.allowed(i, j)) m.mask[i * total_tokens + j] = kernels::kMaskSentinel;
    }
  }
  return m;
}

void add_encoder_params(ParamSet& ps, const EncoderConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string b = prefix + ".l" + std::to_string(l);
    ps.add_ones(b + ".norm1.g", {cfg.hidden});
    add_attention_params(ps, b + ".attn", cfg.hidden, rng);
    ps.add_ones(b + ".norm2.g", {cfg.hidden});
    add_ffn_params(ps, b + ".ffn", cfg.hidden, cfg.ffn_hidden, rng);
  }
}

Var encode(ParamBinding& p, Var tokens, const EncoderConfig& cfg, const ScopeMask& mask, const std::string& prefix) {
  cfg.validate();
  const Shape in_shape = tokens.shape();
  Var x = in_shape.size() == 2 ? reshape(tokens, {1, in_shape[0], in_shape[1]}) : tokens;
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] != cfg.hidden) {
    throw Error(ErrorKind::ShapeMismatch, "encoder input " + shape_str(in_shape) + " for hidden " + std::to_string(cfg.hidden));
  }
  if (mask.total != s[1]) {
    throw Error(ErrorKind::ShapeMismatch, "scope mask over " + std::to_string(mask.total) + " tokens, input has " +
                                              std::to_string(s[1]));
  }
  AttentionOptions opt;
  opt.heads = cfg.heads;
  opt.mask = &mask.mask;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string b = prefix + ".l" + std::to_string(l);
    Var hn = rms_norm(x, p(b + ".norm1.g"), cfg.norm_eps);
    x = add(x, multi_head_attention(p, b + ".attn", hn, hn, opt));
    hn = rms_norm(x, p(b + ".norm2.g"), cfg.norm_eps);
    x = add(x, feed_forward(p, b + ".ffn", hn));
  }
  return in_shape.size() == 2 ? reshape(x, in_shape) : x;
}

}  // namespace tfz
