#include "tfz/model/decoder.hpp"

#include "tfz/errors.hpp"
#include "tfz/model/layers.hpp"
#include "tfz/numerics/kernels.hpp"

namespace tfz {

namespace {

Tensor causal_mask(std::size_t s) {
  Tensor m({s, s});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = i + 1; j < s; ++j) m[i * s + j] = kernels::kMaskSentinel;
  }
  return m;
}

}  // namespace

void DecoderConfig::validate() const {
  if (layers == 0 || hidden == 0 || heads == 0 || ffn_hidden == 0 || vocab == 0 || max_seq == 0) {
    throw Error(ErrorKind::BadConfig, "decoder extents must be >= 1");
  }
  if (hidden % heads != 0 || (hidden / heads) % 2 != 0) {
    throw Error(ErrorKind::BadConfig, "decoder head width must be even: hidden " + std::to_string(hidden) + ", heads " +
                                          std::to_string(heads));
  }
  if (!(rotary_base > 0.0)) throw Error(ErrorKind::BadConfig, "rotary base must be positive");
}

void add_decoder_params(ParamSet& ps, const DecoderConfig& cfg, std::size_t video_width, Rng& rng) {
  cfg.validate();
  ps.add_normal("dec.vproj.w", {video_width, cfg.hidden}, rng, kInitStd);
  ps.add_zeros("dec.vproj.b", {cfg.hidden});
  ps.add_normal("dec.embed", {cfg.vocab, cfg.hidden}, rng, kInitStd);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string b = "dec.l" + std::to_string(l);
    ps.add_ones(b + ".norm1.g", {cfg.hidden});
    add_attention_params(ps, b + ".attn", cfg.hidden, rng);
    ps.add_ones(b + ".norm2.g", {cfg.hidden});
    add_ffn_params(ps, b + ".ffn", cfg.hidden, cfg.ffn_hidden, rng);
  }
  ps.add_ones("dec.norm.g", {cfg.hidden});
  ps.add_normal("dec.head.w", {cfg.hidden, kNumOptions}, rng, kInitStd);
  ps.add_zeros("dec.head.b", {kNumOptions});
}

Var decode_sequence(ParamBinding& p, const MCQBatch& batch, const DecoderConfig& cfg) {
  cfg.validate();
  const Shape& vs = batch.video_tokens.shape();
  if (vs.size() != 3) throw Error(ErrorKind::ShapeMismatch, "video tokens must be [B, L, out], got " + shape_str(vs));
  const std::size_t B = vs[0], L = vs[1], Q = batch.question_len;
  if (batch.question_ids.size() != B * Q) {
    throw Error(ErrorKind::ShapeMismatch, std::to_string(batch.question_ids.size()) + " question ids for batch " +
                                              std::to_string(B) + " x " + std::to_string(Q));
  }
  const std::size_t S = L + Q;
  if (S > cfg.max_seq) {
    throw Error(ErrorKind::SequenceTooLong, std::to_string(S) + " tokens > max_seq " + std::to_string(cfg.max_seq));
  }
  Var x = linear(batch.video_tokens, p("dec.vproj.w"), p("dec.vproj.b"));
  if (Q > 0) {
    Var q = embedding_lookup(p("dec.embed"), batch.question_ids, {B, Q});
    const Var parts[] = {x, q};
    x = concat_axis(parts, 1);
  }
  const Tensor mask = causal_mask(S);
  AttentionOptions opt;
  opt.heads = cfg.heads;
  opt.mask = &mask;
  opt.rope_base = cfg.rotary_base;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string b = "dec.l" + std::to_string(l);
    Var hn = rms_norm(x, p(b + ".norm1.g"), cfg.norm_eps);
    x = add(x, multi_head_attention(p, b + ".attn", hn, hn, opt));
    hn = rms_norm(x, p(b + ".norm2.g"), cfg.norm_eps);
    x = add(x, feed_forward(p, b + ".ffn", hn));
  }
  return rms_norm(x, p("dec.norm.g"), cfg.norm_eps);
}

Var causal_decode(ParamBinding& p, const MCQBatch& batch, const DecoderConfig& cfg) {
  Var h = decode_sequence(p, batch, cfg);
  const Shape& s = h.shape();
  return reshape(slice_axis(h, 1, s[1] - 1, 1), {s[0], s[2]});
}

Var answer_logits(ParamBinding& p, Var final_hidden) { return linear(final_hidden, p("dec.head.w"), p("dec.head.b")); }

std::vector<std::size_t> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "logits must be [B, C], got " + shape_str(logits.shape()));
  const std::size_t rows = logits.extent(0), cols = logits.extent(1);
  std::vector<std::size_t> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 1; c < cols; ++c) {
      if (logits[r * cols + c] > logits[r * cols + out[r]]) out[r] = c;
    }
  }
  return out;
}

Var mcq_loss(Var logits, const std::vector<std::size_t>& answer_idx) { return cross_entropy(logits, answer_idx); }

}  // namespace tfz
