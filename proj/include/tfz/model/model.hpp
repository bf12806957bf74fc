#pragma once

#include <string>
#include <vector>

#include "tfz/model/compressor.hpp"
#include "tfz/model/decoder.hpp"
#include "tfz/model/encoder.hpp"
#include "tfz/model/fusion.hpp"
#include "tfz/model/frontend.hpp"

namespace tfz {

/// Everything that fixes a model's parameter shapes and forward pass.
struct ModelConfig {
  FusionMethod method = FusionMethod::Baseline;
  std::size_t k = 1;
  std::size_t n_input = 4;
  std::size_t channels = 3;
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t patch = 7;
  EncoderConfig encoder;
  std::size_t out_hidden = 32;
  std::size_t qformer_layers = 2;
  std::size_t qformer_heads = 4;
  DecoderConfig decoder;

  /// Throws BadConfig / Indivisible* / NonIntegralBudget for unusable settings.
  void validate() const;

  std::size_t tokens_per_frame() const { return (height / patch) * (width / patch); }  // T
  std::size_t decoder_tokens_per_frame() const { return downsampled_tokens(tokens_per_frame()); }  // l
  std::size_t ratio() const { return effective_ratio(method, k); }
  /// Frames the visual encoder sees: n_input, or n_input/k after channel merging.
  std::size_t encoder_frames() const;
  TokenBudget budget() const { return token_budget(n_input, decoder_tokens_per_frame(), ratio()); }
  EncoderConfig encoder_config() const;
  CompressorConfig compressor_config() const;
};

std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

class Model {
 public:
  Model(ModelConfig cfg, ParamSet params);

  /// Fresh parameters drawn from `seed`.
  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  /// Frontend, encoder and compressor: pixels [B, n_input, C, H, W] -> [B, L_decoder, out].
  Var video_tokens(ParamBinding& p, const Tensor& pixels) const;
  /// Encoder output [B, F, T, h] before compression.
  Var encoded(ParamBinding& p, const Tensor& pixels) const;
  /// Option logits [B, 4] for questions laid out row-major as B x question_len ids.
  Var logits(ParamBinding& p, const Tensor& pixels, const std::vector<std::size_t>& question_ids,
             std::size_t question_len) const;

 private:
  ModelConfig cfg_;
  ParamSet params_;
  ScopeMask scope_;
};

/// Picks n frames at stride F/n from a clip of F frames.
Tensor sample_frames(const Tensor& clip_pixels, std::size_t n);

}  // namespace tfz
