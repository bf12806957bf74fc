#pragma once

#include <string>
#include <vector>

#include "tfz/numerics/ops.hpp"
#include "tfz/numerics/params.hpp"

namespace tfz {

class Rng;

inline constexpr std::size_t kNumOptions = 4;

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t vocab = 64;
  std::size_t max_seq = 512;
  double rotary_base = 10000.0;
  double norm_eps = 1e-6;

  void validate() const;
};

struct MCQBatch {
  Var video_tokens;                       // [B, L_decoder, out]
  std::vector<std::size_t> question_ids;  // B * question_len, row-major
  std::size_t question_len = 0;
  std::vector<std::size_t> answer_idx;    // B entries in [0, 4)

  std::size_t batch() const { return video_tokens.shape()[0]; }
};

/// Parameters `dec.*`; video tokens of width `video_width` are projected to the decoder width.
void add_decoder_params(ParamSet& ps, const DecoderConfig& cfg, std::size_t video_width, Rng& rng);

/// Hidden states [B, S, hidden] of the causal transformer over
/// [projected video tokens | embedded question ids], after the final norm.
/// Throws SequenceTooLong when S exceeds cfg.max_seq.
Var decode_sequence(ParamBinding& p, const MCQBatch& batch, const DecoderConfig& cfg);

/// Last-position hidden state [B, hidden].
Var causal_decode(ParamBinding& p, const MCQBatch& batch, const DecoderConfig& cfg);

/// Option logits [B, 4] from the last hidden state.
Var answer_logits(ParamBinding& p, Var final_hidden);

/// Argmax per row; ties go to the lowest index.
std::vector<std::size_t> predict(const Tensor& logits);

/// Mean cross-entropy of logits [B, 4] against answer indices.
Var mcq_loss(Var logits, const std::vector<std::size_t>& answer_idx);

}  // namespace tfz
