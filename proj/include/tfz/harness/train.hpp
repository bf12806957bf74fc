#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tfz/model/model.hpp"
#include "tfz/numerics/rng.hpp"
#include "tfz/synthclips/synthclips.hpp"

namespace tfz {

struct TrainConfig {
  std::size_t total_steps = 2000;
  std::size_t warmup_steps = 200;
  std::size_t batch = 32;
  double lr = 3e-4;
  double min_lr = 3e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // Reorders the four answer slots of every training row each step; the
  // label follows its option, so the video content is unchanged.
  bool shuffle_options = true;

  void validate() const;
};

/// Linear warmup from 0 to lr, then cosine decay reaching min_lr at total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

class Adam {
 public:
  Adam(const ParamSet& params, const TrainConfig& cfg);
  /// One update with learning rate `lr`; grads aligned with params.names().
  void step(ParamSet& params, const std::vector<Tensor>& grads, double lr);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  double b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Model-ready copies of samples: frames subsampled to n_input.
struct PreparedSet {
  std::size_t n_input = 0;
  Tensor pixels;                          // [N, n_input, C, H, W]
  std::vector<std::size_t> question_ids;  // N * kQuestionLength
  std::vector<std::size_t> answers;
  std::vector<TaskCategory> categories;

  std::size_t size() const noexcept { return answers.size(); }
  Tensor batch_pixels(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> batch_ids(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> batch_answers(std::span<const std::size_t> rows) const;
};

PreparedSet prepare(const std::vector<SyntheticSample>& samples, std::size_t n_input,
                    std::span<const std::size_t> rows = {});

struct TrainResult {
  std::vector<double> losses;
  double seconds = 0.0;
};

using StepCallback = std::function<void(std::size_t step, double loss, double lr)>;

/// Adam on mean cross-entropy with seeded reshuffles each epoch. Throws
/// DivergedLoss naming the step when a loss is not finite.
/// Applies a random slot permutation to each row of question ids in place
/// and relabels the answers to match.
void permute_options(std::vector<std::size_t>& ids, std::vector<std::size_t>& answers, Rng& rng);

TrainResult train(Model& model, const PreparedSet& data, const TrainConfig& cfg, const StepCallback& on_step = {});

struct CostEstimate {
  std::size_t encoder_attention_span = 0;  // keys per query inside the encoder
  std::size_t decoder_length = 0;          // video plus question tokens
  double macs_per_sample = 0.0;            // forward multiply-accumulates
};

CostEstimate estimate_cost(const ModelConfig& cfg);

struct RunResult {
  FusionMethod method = FusionMethod::Baseline;
  std::size_t k = 1;
  std::size_t n_input = 0;
  std::size_t l_decoder = 0;
  std::array<std::optional<double>, kNumCategories> accuracy{};
  std::array<std::size_t, kNumCategories> counts{};
  double average = 0.0;
  double seconds = 0.0;
  double final_loss = 0.0;
  CostEstimate cost;
};

/// Argmax accuracy per category and overall (weighted by category counts).
RunResult evaluate(const Model& model, const PreparedSet& data, std::size_t batch = 64);

/// Scores given predictions; exposed so the protocol is testable without a model.
RunResult score_predictions(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& answers,
                            const std::vector<TaskCategory>& categories);

}  // namespace tfz
