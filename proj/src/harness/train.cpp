#include "tfz/harness/train.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <numbers>

#include "tfz/errors.hpp"
#include "tfz/numerics/rng.hpp"

namespace tfz {

void TrainConfig::validate() const {
  if (total_steps > 0 && warmup_steps >= total_steps) {
    throw Error(ErrorKind::BadConfig, "warmup_steps must be < total_steps");
  }
  if (batch == 0) throw Error(ErrorKind::BadConfig, "batch must be >= 1");
  if (!(lr > 0.0) || !(min_lr >= 0.0) || min_lr > lr) throw Error(ErrorKind::BadConfig, "need 0 <= min_lr <= lr, lr > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0)) {
    throw Error(ErrorKind::BadConfig, "Adam betas must be in [0, 1) and eps positive");
  }
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step < cfg.warmup_steps) return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (step >= cfg.total_steps) return cfg.min_lr;
  const double progress =
      static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(const ParamSet& params, const TrainConfig& cfg) : b1_(cfg.adam_beta1), b2_(cfg.adam_beta2), eps_(cfg.adam_eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Tensor::zeros(params.value(i).shape()));
    v_.push_back(Tensor::zeros(params.value(i).shape()));
  }
}

void Adam::step(ParamSet& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "gradient count differs from parameter count");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    if (g.shape() != p.shape()) throw Error(ErrorKind::ShapeMismatch, "gradient for " + params.names()[i]);
    double* m = m_[i].ptr();
    double* v = v_[i].ptr();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1_ * m[j] + (1.0 - b1_) * g[j];
      v[j] = b2_ * v[j] + (1.0 - b2_) * g[j] * g[j];
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

Tensor PreparedSet::batch_pixels(std::span<const std::size_t> rows) const {
  Shape s = pixels.shape();
  const std::size_t per = pixels.size() / s[0];
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(pixels.ptr() + rows[i] * per, per, out.ptr() + i * per);
  return out;
}

std::vector<std::size_t> PreparedSet::batch_ids(std::span<const std::size_t> rows) const {
  std::vector<std::size_t> out;
  out.reserve(rows.size() * kQuestionLength);
  for (std::size_t r : rows) {
    out.insert(out.end(), question_ids.begin() + static_cast<std::ptrdiff_t>(r * kQuestionLength),
               question_ids.begin() + static_cast<std::ptrdiff_t>((r + 1) * kQuestionLength));
  }
  return out;
}

std::vector<std::size_t> PreparedSet::batch_answers(std::span<const std::size_t> rows) const {
  std::vector<std::size_t> out;
  for (std::size_t r : rows) out.push_back(answers[r]);
  return out;
}

PreparedSet prepare(const std::vector<SyntheticSample>& samples, std::size_t n_input, std::span<const std::size_t> rows) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    for (std::size_t i = 0; i < samples.size(); ++i) all.push_back(i);
    rows = all;
  }
  if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "no samples to prepare");
  const Tensor first = sample_frames(samples[rows[0]].clip.pixels, n_input);
  Shape s{rows.size()};
  s.insert(s.end(), first.shape().begin(), first.shape().end());
  PreparedSet ps;
  ps.n_input = n_input;
  ps.pixels = Tensor(s);
  const std::size_t per = first.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SyntheticSample& smp = samples[rows[i]];
    const Tensor f = sample_frames(smp.clip.pixels, n_input);
    if (f.shape() != first.shape()) throw Error(ErrorKind::ShapeMismatch, "clips differ in shape");
    std::copy_n(f.ptr(), per, ps.pixels.ptr() + i * per);
    if (smp.question_ids.size() != kQuestionLength) throw Error(ErrorKind::ShapeMismatch, "question length");
    ps.question_ids.insert(ps.question_ids.end(), smp.question_ids.begin(), smp.question_ids.end());
    ps.answers.push_back(smp.answer_idx);
    ps.categories.push_back(smp.category);
  }
  return ps;
}

void permute_options(std::vector<std::size_t>& ids, std::vector<std::size_t>& answers, Rng& rng) {
  if (ids.size() != answers.size() * kQuestionLength) throw Error(ErrorKind::ShapeMismatch, "ids and answers disagree");
  std::array<std::size_t, kNumOptions> perm{}, values{};
  for (std::size_t r = 0; r < answers.size(); ++r) {
    std::size_t* opt = ids.data() + r * kQuestionLength + 1;
    for (std::size_t s = 0; s < kNumOptions; ++s) {
      perm[s] = s;
      values[s] = (opt[s] - kOptionTokenBase) % kMaxValuesPerCategory;
    }
    rng.shuffle(perm.begin(), perm.end());
    // New slot s shows the option that used to sit in slot perm[s].
    std::size_t answer = answers[r];
    for (std::size_t s = 0; s < kNumOptions; ++s) {
      opt[s] = kOptionTokenBase + s * kMaxValuesPerCategory + values[perm[s]];
      if (perm[s] == answers[r]) answer = s;
    }
    answers[r] = answer;
  }
}

TrainResult train(Model& model, const PreparedSet& data, const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (data.size() == 0) throw Error(ErrorKind::InvalidArgument, "empty training set");
  if (data.n_input != model.config().n_input) {
    throw Error(ErrorKind::ShapeMismatch, "data has " + std::to_string(data.n_input) + " frames, model expects " +
                                              std::to_string(model.config().n_input));
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult out;
  Adam adam(model.params(), cfg);
  Rng rng(mix_seed({cfg.seed, 0x7a11u}));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  std::vector<std::size_t> rows;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    rows.clear();
    while (rows.size() < cfg.batch) {
      if (cursor == order.size()) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      rows.push_back(order[cursor++]);
    }
    Tape tape;
    ParamBinding binding(tape, model.params(), true);
    std::vector<std::size_t> ids = data.batch_ids(rows), answers = data.batch_answers(rows);
    if (cfg.shuffle_options) permute_options(ids, answers, rng);
    Var logits = model.logits(binding, data.batch_pixels(rows), ids, kQuestionLength);
    Var loss = mcq_loss(logits, answers);
    const double lv = loss.value().item();
    if (!std::isfinite(lv)) throw Error(ErrorKind::DivergedLoss, "loss is not finite at step " + std::to_string(step));
    const double lr = lr_at(step, cfg);
    adam.step(model.params(), binding.gradients(backward(tape, loss)), lr);
    out.losses.push_back(lv);
    if (on_step) on_step(step, lv, lr);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

CostEstimate estimate_cost(const ModelConfig& cfg) {
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  CostEstimate c;
  const std::size_t T = cfg.tokens_per_frame(), l = cfg.decoder_tokens_per_frame(), h = cfg.encoder.hidden;
  const std::size_t F = cfg.encoder_frames(), S = F * T, out = cfg.out_hidden, k = cfg.ratio();
  c.encoder_attention_span = cfg.method == FusionMethod::ThroughEncoder ? k * T : T;
  const std::size_t in_ch = cfg.method == FusionMethod::PreEncoderChannelMerge ? cfg.channels * k : cfg.channels;
  double macs = d(S) * d(in_ch * cfg.patch * cfg.patch) * d(h);
  macs += d(cfg.encoder.layers) *
          (4.0 * d(S) * d(h) * d(h) + 2.0 * d(S) * d(h) * d(cfg.encoder.ffn_hidden) + 2.0 * d(S) * d(c.encoder_attention_span) * d(h));
  macs += d(S) * d(h) * d(out);  // 2x2 downsample: S/4 windows of 4h (TE: S/4k windows of 4kh)
  if (cfg.method == FusionMethod::PostMLPKangaroo) macs += d(S / k) * (d(k * h) * d(h) + d(h) * d(h));
  if (cfg.method == FusionMethod::PostQFormer) {
    const double windows = d(cfg.n_input / k), kl = d(k * l);
    const double per_block = 4.0 * d(l) * d(out) * d(out) + 2.0 * d(l) * d(l) * d(out) + 2.0 * d(l) * d(out) * d(out) +
                             2.0 * kl * d(out) * d(out) + 2.0 * d(l) * kl * d(out) + 4.0 * d(l) * d(out) * d(out);
    macs += windows * d(cfg.qformer_layers) * per_block;
  }
  const std::size_t L = cfg.budget().l_decoder, dh = cfg.decoder.hidden;
  c.decoder_length = L + kQuestionLength;
  const double Sd = d(c.decoder_length);
  macs += d(L) * d(out) * d(dh);
  macs += d(cfg.decoder.layers) * (4.0 * Sd * d(dh) * d(dh) + 2.0 * Sd * d(dh) * d(cfg.decoder.ffn_hidden) + Sd * Sd * d(dh));
  macs += d(dh) * d(kNumOptions);
  c.macs_per_sample = macs;
  return c;
}

RunResult score_predictions(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& answers,
                            const std::vector<TaskCategory>& categories) {
  if (predictions.size() != answers.size() || answers.size() != categories.size()) {
    throw Error(ErrorKind::ShapeMismatch, "predictions, answers and categories differ in length");
  }
  if (answers.empty()) throw Error(ErrorKind::InvalidArgument, "nothing to score");
  RunResult r;
  std::array<std::size_t, kNumCategories> right{};
  std::size_t total_right = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const std::size_t c = category_index(categories[i]);
    ++r.counts[c];
    if (predictions[i] == answers[i]) {
      ++right[c];
      ++total_right;
    }
  }
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (r.counts[c] > 0) r.accuracy[c] = static_cast<double>(right[c]) / static_cast<double>(r.counts[c]);
  }
  r.average = static_cast<double>(total_right) / static_cast<double>(answers.size());
  return r;
}

RunResult evaluate(const Model& model, const PreparedSet& data, std::size_t batch) {
  if (batch == 0) throw Error(ErrorKind::InvalidArgument, "batch must be >= 1");
  std::vector<std::size_t> predictions;
  predictions.reserve(data.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    rows.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) rows.push_back(i);
    Tape tape;
    ParamBinding binding(tape, model.params(), false);
    Var logits = model.logits(binding, data.batch_pixels(rows), data.batch_ids(rows), kQuestionLength);
    const auto p = predict(logits.value());
    predictions.insert(predictions.end(), p.begin(), p.end());
  }
  RunResult r = score_predictions(predictions, data.answers, data.categories);
  const ModelConfig& cfg = model.config();
  r.method = cfg.method;
  r.k = cfg.ratio();
  r.n_input = cfg.n_input;
  r.l_decoder = cfg.budget().l_decoder;
  r.cost = estimate_cost(cfg);
  return r;
}

}  // namespace tfz
