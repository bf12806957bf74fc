#include "tfz/model/layers.hpp"

#include <cmath>

#include "tfz/errors.hpp"
#include "tfz/numerics/rng.hpp"

namespace tfz {

namespace {

// [N, S, w] -> [N, heads, S, w/heads]
Var split_heads(Var x, std::size_t heads) {
  const Shape& s = x.shape();
  return permute(reshape(x, {s[0], s[1], heads, s[2] / heads}), {0, 2, 1, 3});
}

Var merge_heads(Var x) {
  const Shape& s = x.shape();
  return reshape(permute(x, {0, 2, 1, 3}), {s[0], s[2], s[1] * s[3]});
}

}  // namespace

void add_attention_params(ParamSet& ps, const std::string& prefix, std::size_t width, Rng& rng) {
  for (const char* n : {".wq", ".wk", ".wv", ".wo"}) ps.add_normal(prefix + n, {width, width}, rng, kInitStd);
  ps.add_zeros(prefix + ".bo", {width});
}

void add_ffn_params(ParamSet& ps, const std::string& prefix, std::size_t width, std::size_t hidden, Rng& rng) {
  ps.add_normal(prefix + ".w1", {width, hidden}, rng, kInitStd);
  ps.add_zeros(prefix + ".b1", {hidden});
  ps.add_normal(prefix + ".w2", {hidden, width}, rng, kInitStd);
  ps.add_zeros(prefix + ".b2", {width});
}

Var multi_head_attention(ParamBinding& p, const std::string& prefix, Var xq, Var xkv, const AttentionOptions& opt) {
  const std::size_t width = xq.shape().back();
  if (xq.shape().size() != 3 || xkv.shape().size() != 3 || opt.heads == 0 || width % opt.heads != 0) {
    throw Error(ErrorKind::ShapeMismatch, "attention inputs " + shape_str(xq.shape()) + " / " + shape_str(xkv.shape()) +
                                              " with " + std::to_string(opt.heads) + " heads");
  }
  Var q = split_heads(linear(xq, p(prefix + ".wq")), opt.heads);
  Var k = split_heads(linear(xkv, p(prefix + ".wk")), opt.heads);
  Var v = split_heads(linear(xkv, p(prefix + ".wv")), opt.heads);
  if (opt.rope_base > 0.0) {
    q = rope(q, opt.rope_base);
    k = rope(k, opt.rope_base);
  }
  Var o = merge_heads(attention(q, k, v, opt.mask, opt.weights_out));
  return linear(o, p(prefix + ".wo"), p(prefix + ".bo"));
}

Var feed_forward(ParamBinding& p, const std::string& prefix, Var x) {
  Var hdn = gelu(linear(x, p(prefix + ".w1"), p(prefix + ".b1")));
  return linear(hdn, p(prefix + ".w2"), p(prefix + ".b2"));
}

}  // namespace tfz
