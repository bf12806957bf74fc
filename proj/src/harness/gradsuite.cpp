#include "tfz/harness/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tfz/errors.hpp"
#include "tfz/model/compressor.hpp"
#include "tfz/model/layers.hpp"
#include "tfz/model/model.hpp"
#include "tfz/numerics/kernels.hpp"
#include "tfz/numerics/rng.hpp"

namespace tfz {
namespace {

constexpr double kStep = 1e-5;
constexpr double kOpTol = 1e-6;
constexpr double kCompositeTol = 1e-4;

struct GradCase {
  std::string_view module;
  std::string name;
  double tol;
  std::function<GradCheckReport(double tol)> run;
};

// sum(y * w) with a fixed random weighting so every output coordinate gets
// its own upstream gradient.
Var weighted_sum(Var y, std::uint64_t seed) {
  Rng rng(seed);
  Var w = y.tape->constant(Tensor::randn(y.shape(), rng));
  return sum(mul(y, w));
}

GradCase op_case(std::string name, std::vector<Shape> shapes, std::function<Var(std::span<const Var>)> op) {
  const std::uint64_t seed = std::hash<std::string>{}(name);
  return {"ops", std::move(name), kOpTol, [=](double tol) {
            Rng rng(seed);
            std::vector<Tensor> inputs;
            for (const Shape& s : shapes) inputs.push_back(Tensor::randn(s, rng));
            TensorLossFn f = [&](Tape&, std::span<const Var> v) { return weighted_sum(op(v), seed + 1); };
            return finite_diff_check(f, inputs, kStep, tol);
          }};
}

Tensor sparse_mask(std::size_t tq, std::size_t tk) {
  Tensor m({tq, tk});
  for (std::size_t i = 0; i < tq; ++i) m[i * tk + (i + 2) % tk] = kernels::kMaskSentinel;
  return m;
}

std::vector<GradCase> op_cases() {
  std::vector<GradCase> c;
  c.push_back(op_case("add/broadcast", {{2, 3, 4}, {3, 4}}, [](auto v) { return add(v[0], v[1]); }));
  c.push_back(op_case("mul", {{2, 3}, {2, 3}}, [](auto v) { return mul(v[0], v[1]); }));
  c.push_back(op_case("scale", {{4}}, [](auto v) { return scale(v[0], -1.7); }));
  c.push_back(op_case("sum", {{2, 2}}, [](auto v) { return sum(v[0]); }));
  c.push_back(op_case("mean_over_axis", {{2, 3, 4}}, [](auto v) { return mean_over_axis(v[0], 1); }));
  c.push_back(op_case("reshape", {{2, 3, 4}}, [](auto v) { return reshape(v[0], {6, 4}); }));
  c.push_back(op_case("permute", {{2, 3, 4}}, [](auto v) { return permute(v[0], {2, 0, 1}); }));
  c.push_back(op_case("concat_axis", {{2, 3, 2}, {2, 1, 2}}, [](auto v) { return concat_axis(v, 1); }));
  c.push_back(op_case("slice_axis", {{2, 4, 3}}, [](auto v) { return slice_axis(v[0], 1, 1, 2); }));
  c.push_back(op_case("expand_prefix", {{2, 2}}, [](auto v) { return expand_prefix(v[0], {3, 2}); }));
  c.push_back(op_case("matmul/batched", {{2, 3, 4}, {2, 4, 5}}, [](auto v) { return matmul(v[0], v[1]); }));
  c.push_back(op_case("matmul/shared", {{3, 3, 4}, {4, 2}}, [](auto v) { return matmul(v[0], v[1]); }));
  c.push_back(op_case("linear", {{2, 3, 4}, {4, 5}, {5}}, [](auto v) { return linear(v[0], v[1], v[2]); }));
  c.push_back(op_case("softmax_lastdim", {{3, 5}}, [](auto v) { return softmax_lastdim(v[0]); }));
  c.push_back(op_case("rms_norm", {{3, 5}, {5}}, [](auto v) { return rms_norm(v[0], v[1], 1e-6); }));
  c.push_back(op_case("gelu", {{10}}, [](auto v) { return gelu(v[0]); }));
  c.push_back(op_case("rope", {{2, 5, 6}}, [](auto v) { return rope(v[0], 10000.0); }));
  c.push_back(op_case("attention/dense", {{2, 4, 3}, {2, 5, 3}, {2, 5, 2}}, [](auto v) { return attention(v[0], v[1], v[2]); }));
  c.push_back(op_case("attention/masked", {{2, 4, 3}, {2, 5, 3}, {2, 5, 2}}, [](auto v) {
    static const Tensor mask = sparse_mask(4, 5);
    return attention(v[0], v[1], v[2], &mask);
  }));
  c.push_back(op_case("embedding_lookup", {{5, 3}}, [](auto v) {
    static const std::vector<std::size_t> ids{3, 1, 3, 0};
    return embedding_lookup(v[0], ids, {2, 2});
  }));
  c.push_back(op_case("cross_entropy", {{2, 4}}, [](auto v) {
    static const std::vector<std::size_t> targets{2, 0};
    return cross_entropy(v[0], targets);
  }));
  return c;
}

std::vector<GradCase> frontend_cases() {
  std::vector<GradCase> c;
  c.push_back({"frontend", "patchify", kOpTol, [](double tol) {
                 Rng rng(31);
                 const Tensor pixels = Tensor::uniform({1, 2, 2, 4, 4}, rng, 0.0, 1.0);
                 TensorLossFn f = [&](Tape& t, std::span<const Var> v) {
                   return weighted_sum(patchify(t, pixels, 2, v[0], v[1]).tokens, 32);
                 };
                 return finite_diff_check(f, {Tensor::randn({8, 3}, rng), Tensor::randn({3}, rng)}, kStep, tol);
               }});
  c.push_back({"frontend", "spatial_pos+merge_neighbor_frames", kOpTol, [](double tol) {
                 Rng rng(33);
                 TensorLossFn f = [&](Tape&, std::span<const Var> v) {
                   const TokenGrid g = add_spatial_pos(TokenGrid{v[0], false}, v[1]);
                   return weighted_sum(merge_neighbor_frames(g, 2, v[2]).tokens, 34);
                 };
                 return finite_diff_check(
                     f, {Tensor::randn({1, 4, 3, 2}, rng), Tensor::randn({3, 2}, rng), Tensor::randn({2, 2}, rng)}, kStep, tol);
               }});
  return c;
}

// Rescales Normal(0, 0.02) weights to unit-variance activations: matrices by
// 1/sqrt(fan_in), tables and queries to unit scale. Keeps softmaxes and
// norms away from saturation so step-1e-5 differences stay accurate.
ParamSet conditioned(ParamSet ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& n = ps.names()[i];
    Tensor& t = ps.value(i);
    if (t.shape().size() != 2) continue;
    const bool table = n.find("embed") != std::string::npos || n.find("queries") != std::string::npos ||
                       n.find("spatial") != std::string::npos || n.find("temporal") != std::string::npos;
    const double target = table ? 1.0 : 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
    for (double& v : t.data()) v *= target / kInitStd;
  }
  return ps;
}

std::vector<GradCase> encoder_cases() {
  std::vector<GradCase> c;
  for (const auto& [name, block] : {std::pair<std::string, std::size_t>{"per-frame", 3}, {"per-group", 6}}) {
    c.push_back({"encoder", name, kCompositeTol, [block](double tol) {
                   EncoderConfig cfg;
                   cfg.hidden = 8;
                   cfg.heads = 2;
                   cfg.ffn_hidden = 12;
                   Rng rng(41);
                   ParamSet ps;
                   add_encoder_params(ps, cfg, rng);
                   ps = conditioned(std::move(ps));
                   const ScopeMask mask = build_scope_mask(6, block);
                   const Tensor x = Tensor::randn({1, 6, 8}, rng);
                   ParamLossFn f = [&](ParamBinding& p) { return weighted_sum(encode(p, p.tape().constant(x), cfg, mask), 42); };
                   return finite_diff_check(f, ps, kStep, tol);
                 }});
  }
  return c;
}

std::vector<GradCase> compressor_cases() {
  std::vector<GradCase> c;
  for (FusionMethod m : kAllMethods) {
    c.push_back({"compressor", std::string(method_name(m)), kCompositeTol, [m](double tol) {
                   const std::size_t k = m == FusionMethod::Baseline ? 1 : 2;
                   const CompressorConfig cfg{m, k, 4, 4, 1, 2};
                   Rng rng(51);
                   ParamSet ps;
                   add_compressor_params(ps, cfg, 4, 4, rng);
                   ps = conditioned(std::move(ps));
                   const std::size_t frames = m == FusionMethod::PreEncoderChannelMerge ? 1 : 2;
                   const Tensor enc = Tensor::randn({1, frames, 16, 4}, rng);
                   ParamLossFn f = [&](ParamBinding& p) {
                     return weighted_sum(compress(p, p.tape().constant(enc), required_scope(m), cfg), 52);
                   };
                   return finite_diff_check(f, ps, kStep, tol);
                 }});
  }
  return c;
}

DecoderConfig tiny_decoder() {
  DecoderConfig d;
  d.hidden = 8;
  d.heads = 2;
  d.ffn_hidden = 12;
  d.vocab = 16;
  d.max_seq = 32;
  return d;
}

std::vector<GradCase> decoder_cases() {
  return {{"decoder", "causal_decode+mcq_loss", kCompositeTol, [](double tol) {
             const DecoderConfig cfg = tiny_decoder();
             Rng rng(61);
             ParamSet ps;
             add_decoder_params(ps, cfg, 4, rng);
             ps = conditioned(std::move(ps));
             const Tensor video = Tensor::randn({2, 3, 4}, rng);
             ParamLossFn f = [&](ParamBinding& p) {
               MCQBatch b{p.tape().constant(video), {1, 2, 3, 4}, 2, {1, 3}};
               return mcq_loss(answer_logits(p, causal_decode(p, b, cfg)), b.answer_idx);
             };
             return finite_diff_check(f, ps, kStep, tol);
           }}};
}

// Two frames at 8x8 with 2x2 patches: four decoder tokens per frame.
std::vector<GradCase> model_cases() {
  std::vector<GradCase> c;
  for (FusionMethod m : kAllMethods) {
    c.push_back({"model", std::string(method_name(m)), kCompositeTol, [m](double tol) {
                   ModelConfig mc;
                   mc.method = m;
                   mc.k = m == FusionMethod::Baseline ? 1 : 2;
                   mc.n_input = 2;
                   mc.channels = 1;
                   mc.height = mc.width = 8;
                   mc.patch = 2;
                   mc.encoder.hidden = 8;
                   mc.encoder.heads = 2;
                   mc.encoder.ffn_hidden = 8;
                   mc.out_hidden = 8;
                   mc.qformer_layers = 1;
                   mc.qformer_heads = 2;
                   mc.decoder = tiny_decoder();
                   Model model = Model::init(mc, 71);
                   model.params() = conditioned(model.params());
                   Rng rng(72);
                   const Tensor pixels = Tensor::uniform({2, 2, 1, 8, 8}, rng, 0.0, 1.0);
                   ParamLossFn f = [&](ParamBinding& p) { return mcq_loss(model.logits(p, pixels, {0, 5, 9, 1, 7, 12}, 3), {2, 1}); };
                   return finite_diff_check(f, model.params(), kStep, tol);
                 }});
  }
  return c;
}

}  // namespace

std::vector<GradCaseResult> run_gradient_suite(std::string_view module) {
  if (!module.empty() && std::find(std::begin(kGradModules), std::end(kGradModules), module) == std::end(kGradModules)) {
    throw Error(ErrorKind::InvalidArgument, "unknown gradient module '" + std::string(module) + "'");
  }
  std::vector<GradCase> cases;
  for (auto* group : {&op_cases, &frontend_cases, &encoder_cases, &compressor_cases, &decoder_cases, &model_cases}) {
    for (GradCase& g : (*group)()) {
      if (module.empty() || g.module == module) cases.push_back(std::move(g));
    }
  }
  std::vector<GradCaseResult> out;
  for (const GradCase& g : cases) out.push_back({std::string(g.module), g.name, g.tol, g.run(g.tol)});
  return out;
}

}  // namespace tfz
