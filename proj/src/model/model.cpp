#include "tfz/model/model.hpp"

#include <iostream>

#include "json.hpp"
#include "tfz/errors.hpp"
#include "tfz/model/layers.hpp"
#include "tfz/numerics/rng.hpp"

namespace tfz {

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

std::size_t ModelConfig::encoder_frames() const {
  return method == FusionMethod::PreEncoderChannelMerge ? n_input / k : n_input;
}

EncoderConfig ModelConfig::encoder_config() const {
  EncoderConfig e = encoder;
  e.scope = required_scope(method);
  return e;
}

CompressorConfig ModelConfig::compressor_config() const {
  CompressorConfig c;
  c.method = method;
  c.k = ratio();
  c.out_hidden = out_hidden;
  c.qformer_queries = decoder_tokens_per_frame();
  c.qformer_layers = qformer_layers;
  c.qformer_heads = qformer_heads;
  return c;
}

void ModelConfig::validate() const {
  if (k == 0 || n_input == 0 || channels == 0 || patch == 0 || out_hidden == 0) {
    throw Error(ErrorKind::BadConfig, "model extents must be >= 1");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw Error(ErrorKind::IndivisibleResolution,
                std::to_string(height) + "x" + std::to_string(width) + " by patch " + std::to_string(patch));
  }
  decoder_tokens_per_frame();
  if (n_input % ratio() != 0) {
    throw Error(ErrorKind::IndivisibleFrames, std::to_string(n_input) + " frames by k=" + std::to_string(k));
  }
  budget();
  encoder.validate();
  decoder.validate();
  if (method == FusionMethod::PostQFormer && (qformer_heads == 0 || out_hidden % qformer_heads != 0)) {
    throw Error(ErrorKind::BadConfig, "qformer width not divisible by heads");
  }
}

std::string to_json(const ModelConfig& c) {
  json j = {
      {"method", std::string(method_name(c.method))},
      {"k", c.k},
      {"n_input", c.n_input},
      {"channels", c.channels},
      {"height", c.height},
      {"width", c.width},
      {"patch", c.patch},
      {"encoder", {{"layers", c.encoder.layers}, {"hidden", c.encoder.hidden}, {"heads", c.encoder.heads},
                   {"ffn_hidden", c.encoder.ffn_hidden}}},
      {"out_hidden", c.out_hidden},
      {"qformer_layers", c.qformer_layers},
      {"qformer_heads", c.qformer_heads},
      {"decoder", {{"layers", c.decoder.layers}, {"hidden", c.decoder.hidden}, {"heads", c.decoder.heads},
                   {"ffn_hidden", c.decoder.ffn_hidden}, {"vocab", c.decoder.vocab}, {"max_seq", c.decoder.max_seq},
                   {"rotary_base", c.decoder.rotary_base}}},
  };
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    if (j.contains("method")) {
      const auto name = j.at("method").get<std::string>();
      const auto m = parse_method(name);
      if (!m) throw Error(ErrorKind::BadConfig, "unknown method " + name);
      c.method = *m;
    }
    read_field(j, "k", c.k);
    read_field(j, "n_input", c.n_input);
    read_field(j, "channels", c.channels);
    read_field(j, "height", c.height);
    read_field(j, "width", c.width);
    read_field(j, "patch", c.patch);
    read_field(j, "out_hidden", c.out_hidden);
    read_field(j, "qformer_layers", c.qformer_layers);
    read_field(j, "qformer_heads", c.qformer_heads);
    if (j.contains("encoder")) {
      const json& e = j.at("encoder");
      read_field(e, "layers", c.encoder.layers);
      read_field(e, "hidden", c.encoder.hidden);
      read_field(e, "heads", c.encoder.heads);
      read_field(e, "ffn_hidden", c.encoder.ffn_hidden);
    }
    if (j.contains("decoder")) {
      const json& d = j.at("decoder");
      read_field(d, "layers", c.decoder.layers);
      read_field(d, "hidden", c.decoder.hidden);
      read_field(d, "heads", c.decoder.heads);
      read_field(d, "ffn_hidden", c.decoder.ffn_hidden);
      read_field(d, "vocab", c.decoder.vocab);
      read_field(d, "max_seq", c.decoder.max_seq);
      read_field(d, "rotary_base", c.decoder.rotary_base);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
  return c;
}

Model::Model(ModelConfig cfg, ParamSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const std::size_t T = cfg_.tokens_per_frame();
  const std::size_t block = cfg_.method == FusionMethod::ThroughEncoder ? cfg_.k * T : T;
  scope_ = build_scope_mask(cfg_.encoder_frames() * T, block);
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.method == FusionMethod::PreEncoderChannelMerge && cfg.k > 4) {
    std::cerr << "warning: channel merging beyond k=4 stacks " << cfg.k * cfg.channels
              << " channels per patch; expect heavy information loss\n";
  }
  Rng rng(seed);
  ParamSet ps;
  const std::size_t h = cfg.encoder.hidden, T = cfg.tokens_per_frame();
  const std::size_t in_channels = cfg.method == FusionMethod::PreEncoderChannelMerge ? cfg.channels * cfg.k : cfg.channels;
  ps.add_normal("fe.patch.w", {in_channels * cfg.patch * cfg.patch, h}, rng, kInitStd);
  ps.add_zeros("fe.patch.b", {h});
  ps.add_normal("fe.spatial", {T, h}, rng, kInitStd);
  if (cfg.method == FusionMethod::ThroughEncoder) ps.add_normal("fe.temporal", {cfg.k, h}, rng, kInitStd);
  add_encoder_params(ps, cfg.encoder_config(), rng);
  add_compressor_params(ps, cfg.compressor_config(), h, cfg.decoder_tokens_per_frame(), rng);
  add_decoder_params(ps, cfg.decoder, cfg.out_hidden, rng);
  return Model(cfg, std::move(ps));
}

Var Model::encoded(ParamBinding& p, const Tensor& pixels) const {
  const Shape& s = pixels.shape();
  const Shape expect{s.empty() ? 0 : s[0], cfg_.n_input, cfg_.channels, cfg_.height, cfg_.width};
  if (s != expect) throw Error(ErrorKind::ShapeMismatch, "pixels " + shape_str(s) + ", expected " + shape_str(expect));
  const std::size_t B = s[0], h = cfg_.encoder.hidden, T = cfg_.tokens_per_frame(), F = cfg_.encoder_frames();
  Tape& tape = p.tape();
  TokenGrid grid =
      cfg_.method == FusionMethod::PreEncoderChannelMerge
          ? patchify(tape, merge_temporal_channels(pixels, cfg_.k), cfg_.patch, p("fe.patch.w"), p("fe.patch.b"))
          : patchify(tape, pixels, cfg_.patch, p("fe.patch.w"), p("fe.patch.b"));
  grid = add_spatial_pos(grid, p("fe.spatial"));
  Var flat;
  if (cfg_.method == FusionMethod::ThroughEncoder) {
    flat = reshape(merge_neighbor_frames(grid, cfg_.k, p("fe.temporal")).tokens, {B, F * T, h});
  } else {
    flat = reshape(grid.tokens, {B, F * T, h});
  }
  return reshape(encode(p, flat, cfg_.encoder_config(), scope_), {B, F, T, h});
}

Var Model::video_tokens(ParamBinding& p, const Tensor& pixels) const {
  Var c = compress(p, encoded(p, pixels), cfg_.encoder_config().scope, cfg_.compressor_config());
  const Shape& s = c.shape();
  const std::size_t L = s[1] * s[2];
  if (L != cfg_.budget().l_decoder) {
    throw Error(ErrorKind::ShapeMismatch, "compressor emitted " + std::to_string(L) + " tokens, budget is " +
                                              std::to_string(cfg_.budget().l_decoder));
  }
  return reshape(c, {s[0], L, s[3]});
}

Var Model::logits(ParamBinding& p, const Tensor& pixels, const std::vector<std::size_t>& question_ids,
                  std::size_t question_len) const {
  MCQBatch batch{video_tokens(p, pixels), question_ids, question_len, {}};
  return answer_logits(p, causal_decode(p, batch, cfg_.decoder));
}

Tensor sample_frames(const Tensor& clip_pixels, std::size_t n) {
  if (clip_pixels.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "clip must be [F, C, H, W]");
  const Shape& s = clip_pixels.shape();
  const std::size_t F = s[0];
  if (n == 0 || n > F || F % n != 0) {
    throw Error(ErrorKind::IndivisibleFrames, "cannot sample " + std::to_string(n) + " of " + std::to_string(F) + " frames");
  }
  const std::size_t stride = F / n, frame = s[1] * s[2] * s[3];
  Tensor out({n, s[1], s[2], s[3]});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(clip_pixels.ptr() + i * stride * frame, frame, out.ptr() + i * frame);
  return out;
}

}  // namespace tfz
