#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "tfz/errors.hpp"
#include "tfz/model/compressor.hpp"
#include "tfz/model/model.hpp"

using namespace tfz;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::InvalidArgument;
}

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape t;
  return f(t).value();
}

// Copies every parameter of `from` whose name and shape also exist in `to`.
void copy_shared(const ParamSet& from, ParamSet& to) {
  for (std::size_t i = 0; i < from.size(); ++i) {
    const std::string& n = from.names()[i];
    if (to.contains(n) && to.at(n).shape() == from.value(i).shape()) to.at(n) = from.value(i);
  }
}

ParamSet compressor_params(const CompressorConfig& cfg, std::size_t h, std::size_t l, std::uint64_t seed, double scale) {
  Rng rng(seed);
  ParamSet ps;
  add_compressor_params(ps, cfg, h, l, rng);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (double& v : ps.value(i).data()) v *= scale;
  }
  return ps;
}

Tensor compressed(const ParamSet& ps, const Tensor& encoded, EncoderScope scope, const CompressorConfig& cfg) {
  Tape t;
  ParamBinding p(t, ps, false);
  return compress(p, t.constant(encoded), scope, cfg).value();
}

ModelConfig tiny_model(FusionMethod m, std::size_t k, std::size_t n_input) {
  ModelConfig c;
  c.method = m;
  c.k = k;
  c.n_input = n_input;
  c.channels = 1;
  c.height = c.width = 8;
  c.patch = 2;  // T = 16, l = 4
  c.encoder.hidden = 8;
  c.encoder.heads = 2;
  c.encoder.ffn_hidden = 12;
  c.out_hidden = 8;
  c.qformer_heads = 2;
  c.decoder.hidden = 8;
  c.decoder.heads = 2;
  c.decoder.ffn_hidden = 12;
  return c;
}

}  // namespace

TEST_CASE("token_budget examples") {
  CHECK(token_budget(16, 64, 4).l_decoder == 256);
  CHECK(token_budget(4, 64, 1).l_decoder == 256);
  CHECK(token_budget(16, 64, 16).l_decoder == 64);
  CHECK(token_budget(16, 4, 8) == TokenBudget{16, 4, 8, 8});
  CHECK(kind_of([] { token_budget(3, 1, 2); }) == ErrorKind::NonIntegralBudget);
  CHECK(effective_ratio(FusionMethod::Baseline, 8) == 1);
  CHECK(effective_ratio(FusionMethod::PostPoolPLLaVA, 8) == 8);
}

TEST_CASE("downsampled token counts") {
  CHECK(downsampled_tokens(16) == 4);
  CHECK(downsampled_tokens(256) == 64);
  CHECK(kind_of([] { downsampled_tokens(12); }) == ErrorKind::NonSquareGrid);
  CHECK(kind_of([] { downsampled_tokens(9); }) == ErrorKind::OddGridSide);
}

TEST_CASE("spatial downsample matches a window-concatenation oracle") {
  const std::size_t F = 2, side = 4, T = side * side, h = 3, out = 5;
  Rng rng(1);
  const Tensor x = Tensor::randn({F, T, h}, rng), w = Tensor::randn({4 * h, out}, rng), b = Tensor::randn({out}, rng);
  const Tensor y = eval([&](Tape& t) { return spatial_downsample_with_proj(t.constant(x), t.constant(w), t.constant(b)); });
  REQUIRE(y.shape() == Shape{F, T / 4, out});
  const std::size_t half = side / 2;
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t wr = 0; wr < half; ++wr) {
      for (std::size_t wc = 0; wc < half; ++wc) {
        for (std::size_t o = 0; o < out; ++o) {
          double acc = b[o];
          for (std::size_t q = 0; q < 4; ++q) {
            const std::size_t tok = (2 * wr + q / 2) * side + 2 * wc + q % 2;
            for (std::size_t c = 0; c < h; ++c) acc += x[(f * T + tok) * h + c] * w[(q * h + c) * out + o];
          }
          CHECK(y[((f * (T / 4)) + wr * half + wc) * out + o] == doctest::Approx(acc).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("spatial downsample of constant tokens is constant") {
  const std::size_t h = 4;
  Tensor w({4 * h, h});
  for (std::size_t q = 0; q < 4; ++q) {
    for (std::size_t c = 0; c < h; ++c) w[(q * h + c) * h + c] = 0.25;
  }
  const Tensor x = Tensor::full({1, 16, h}, 0.5);
  const Tensor y = eval([&](Tape& t) { return spatial_downsample_with_proj(t.constant(x), t.constant(w), Var{}); });
  for (double v : y.data()) CHECK(v == 0.5);
  CHECK(kind_of([&] { eval([&](Tape& t) { return spatial_downsample_with_proj(t.constant(Tensor({1, 8, h})), t.constant(w), Var{}); }); }) ==
        ErrorKind::NonSquareGrid);
}

TEST_CASE("te_concat_and_project") {
  const std::size_t G = 4, k = 2, T = 16, h = 32, out = 8;
  Rng rng(2);
  const Tensor x = Tensor::randn({G, k * T, h}, rng), w = Tensor::randn({4 * k * h, out}, rng, 0.1);
  const Tensor b = Tensor::randn({out}, rng);
  const auto te = [&](const Tensor& in) {
    return eval([&](Tape& t) { return te_concat_and_project(t.constant(in), k, t.constant(w), t.constant(b)); });
  };
  const Tensor y = te(x);
  REQUIRE(y.shape() == Shape{G, 4, out});

  SUBCASE("oracle over window slot, in-group frame and channel") {
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t win = 0; win < 4; ++win) {
        const std::size_t wr = win / 2, wc = win % 2;
        for (std::size_t o = 0; o < out; ++o) {
          double acc = b[o];
          for (std::size_t q = 0; q < 4; ++q) {
            const std::size_t p = (2 * wr + q / 2) * 4 + 2 * wc + q % 2;
            for (std::size_t j = 0; j < k; ++j) {
              for (std::size_t c = 0; c < h; ++c) {
                acc += x[(g * k * T + j * T + p) * h + c] * w[((q * k + j) * h + c) * out + o];
              }
            }
          }
          CHECK(y[(g * 4 + win) * out + o] == doctest::Approx(acc).epsilon(1e-12));
        }
      }
    }
  }

  SUBCASE("each output window reads only its own positions across the group") {
    const std::size_t g = 2, win = 3;
    Tensor masked = Tensor::zeros(x.shape());
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t p = (2 * (win / 2) + q / 2) * 4 + 2 * (win % 2) + q % 2;
        for (std::size_t c = 0; c < h; ++c) masked[(g * k * T + j * T + p) * h + c] = x[(g * k * T + j * T + p) * h + c];
      }
    }
    const Tensor ym = te(masked);
    for (std::size_t o = 0; o < out; ++o) CHECK(ym[(g * 4 + win) * out + o] == y[(g * 4 + win) * out + o]);
  }

  SUBCASE("k = 1 is the plain spatial downsample") {
    const Tensor x1 = Tensor::randn({3, T, h}, rng), w1 = Tensor::randn({4 * h, out}, rng);
    const Tensor a = eval([&](Tape& t) { return te_concat_and_project(t.constant(x1), 1, t.constant(w1), t.constant(b)); });
    const Tensor c = eval([&](Tape& t) { return spatial_downsample_with_proj(t.constant(x1), t.constant(w1), t.constant(b)); });
    CHECK(bit_equal(a, c));
  }

  SUBCASE("token count must split into k frames") {
    CHECK(kind_of([&] {
            eval([&](Tape& t) { return te_concat_and_project(t.constant(Tensor({1, 15, h})), 2, t.constant(w), t.constant(b)); });
          }) == ErrorKind::IndivisibleTokens);
  }
}

TEST_CASE("kangaroo temporal mlp shapes and gradients") {
  const std::size_t G = 4, k = 2, T = 16, h = 32, out = 8;
  Rng rng(3);
  const Tensor x = Tensor::randn({G, k * T, h}, rng);
  const Tensor w1 = Tensor::randn({k * h, h}, rng, 0.1), b1 = Tensor::randn({h}, rng, 0.1);
  const Tensor w2 = Tensor::randn({h, h}, rng, 0.1), b2 = Tensor::randn({h}, rng, 0.1);
  const Tensor pw = Tensor::randn({4 * h, out}, rng, 0.1), pb = Tensor::randn({out}, rng, 0.1);
  const Tensor y = eval([&](Tape& t) {
    return kangaroo_temporal_mlp(t.constant(x), k, t.constant(w1), t.constant(b1), t.constant(w2), t.constant(b2),
                                 t.constant(pw), t.constant(pb));
  });
  CHECK(y.shape() == Shape{G, 4, out});

  Rng small(4);
  const std::vector<Tensor> in = {Tensor::randn({1, 2 * 4, 3}, small), Tensor::randn({6, 3}, small),
                                  Tensor::randn({3}, small),         Tensor::randn({3, 3}, small),
                                  Tensor::randn({3}, small),         Tensor::randn({12, 2}, small),
                                  Tensor::randn({2}, small)};
  const GradCheckReport rep = tfz::testing::check_op(
      [](std::span<const Var> v) { return kangaroo_temporal_mlp(v[0], 2, v[1], v[2], v[3], v[4], v[5], v[6]); }, in, 1e-4);
  CHECK(rep.pass);
}

TEST_CASE("pllava temporal pool") {
  Rng rng(5);
  const Tensor a = Tensor::randn({1, 1, 4, 3}, rng), b = Tensor::randn({1, 1, 4, 3}, rng);
  const auto pool = [](const Tensor& x, std::size_t k) {
    return eval([&](Tape& t) { return pllava_temporal_pool(t.constant(x), k); });
  };
  const auto frames = [](std::initializer_list<const Tensor*> fs) {
    Tensor out({1, fs.size(), 4, 3});
    std::size_t i = 0;
    for (const Tensor* f : fs) std::copy_n(f->ptr(), 12, out.ptr() + 12 * i++);
    return out;
  };

  SUBCASE("mean of identical frames is that frame") {
    const Tensor y = pool(frames({&a, &a, &a, &a}), 4);
    for (std::size_t i = 0; i < 12; ++i) CHECK(y[i] == doctest::Approx(a[i]).epsilon(1e-15));
  }
  SUBCASE("two frames average exactly") {
    const Tensor y = pool(frames({&a, &b}), 2);
    for (std::size_t i = 0; i < 12; ++i) CHECK(y[i] == (a[i] + b[i]) / 2.0);
  }
  SUBCASE("k = 1 is the identity") {
    const Tensor x = frames({&a, &b, &a});
    CHECK(bit_equal(pool(x, 1), x));
  }
  SUBCASE("invariant within a window, not across windows") {
    const Tensor c = Tensor::randn({1, 1, 4, 3}, rng), d = Tensor::randn({1, 1, 4, 3}, rng);
    const Tensor y = pool(frames({&a, &b, &c, &d}), 2);
    CHECK(max_abs_diff(y, pool(frames({&b, &a, &c, &d}), 2)) < 1e-15);
    CHECK(max_abs_diff(y, pool(frames({&a, &c, &b, &d}), 2)) > 1e-3);
  }
  SUBCASE("frames must divide") {
    CHECK(kind_of([&] { pool(frames({&a, &b, &a}), 2); }) == ErrorKind::IndivisibleFrames);
  }
}

TEST_CASE("qformer compress") {
  const std::size_t l = 4, out = 8;
  CompressorConfig cfg;
  cfg.method = FusionMethod::PostQFormer;
  cfg.out_hidden = out;
  cfg.qformer_queries = l;
  cfg.qformer_heads = 2;
  Rng rng(6);
  const Tensor per_frame = Tensor::randn({2, 8, l, out}, rng);

  SUBCASE("one window of any size yields l tokens") {
    for (std::size_t k : {1, 2, 4, 8}) {
      cfg.k = k;
      const ParamSet ps = compressor_params(cfg, 4, l, 7, 1.0);
      Tape t;
      ParamBinding p(t, ps, false);
      const Var y = qformer_compress(p, t.constant(per_frame), cfg);
      CHECK(y.shape() == Shape{2, 8 / k, l, out});
    }
  }

  SUBCASE("zero output projections return the queries") {
    cfg.k = 2;
    cfg.qformer_layers = 1;
    ParamSet ps = compressor_params(cfg, 4, l, 8, 1.0);
    ps.at("cmp.qf.b0.self.wo") = Tensor::zeros({out, out});
    ps.at("cmp.qf.b0.cross.wo") = Tensor::zeros({out, out});
    ps.at("cmp.qf.b0.ffn.w2") = Tensor::zeros(ps.at("cmp.qf.b0.ffn.w2").shape());
    ps.at("cmp.qf.b0.self.bo") = Tensor::zeros({out});
    ps.at("cmp.qf.b0.cross.bo") = Tensor::zeros({out});
    ps.at("cmp.qf.b0.ffn.b2") = Tensor::zeros({out});
    Tape t;
    ParamBinding p(t, ps, false);
    const Tensor y = qformer_compress(p, t.constant(per_frame), cfg).value();
    const Tensor& q = ps.at("cmp.qf.queries");
    for (std::size_t w = 0; w < 2 * 4; ++w) {
      for (std::size_t i = 0; i < l * out; ++i) CHECK(y[w * l * out + i] == q[i]);
    }
  }

  SUBCASE("cross-attention weights are distributions over the window keys") {
    cfg.k = 4;
    const ParamSet ps = compressor_params(cfg, 4, l, 9, 10.0);
    std::vector<Tensor> weights;
    Tape t;
    ParamBinding p(t, ps, false);
    qformer_compress(p, t.constant(per_frame), cfg, &weights);
    REQUIRE(weights.size() == cfg.qformer_layers);
    for (const Tensor& w : weights) {
      REQUIRE(w.shape() == Shape{2 * 2, 2, l, 4 * l});
      for (std::size_t r = 0; r < w.size() / (4 * l); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4 * l; ++j) {
          CHECK(w[r * 4 * l + j] >= 0.0);
          s += w[r * 4 * l + j];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("compress emits the token budget for every method and ratio") {
  const std::size_t N = 16, T = 16, l = 4, h = 8, out = 8;
  Rng rng(10);
  const Tensor encoded = Tensor::randn({1, N, T, h}, rng);
  for (FusionMethod m : kCompressingMethods) {
    for (std::size_t k : {2, 4, 8, 16}) {
      CAPTURE(method_name(m));
      CAPTURE(k);
      CompressorConfig cfg{m, k, out, l, 2, 2};
      const ParamSet ps = compressor_params(cfg, h, l, 11, 1.0);
      // Channel merging happens before the encoder, which then sees N/k frames.
      const std::size_t frames = m == FusionMethod::PreEncoderChannelMerge ? N / k : N;
      Tensor in({1, frames, T, h});
      std::copy_n(encoded.ptr(), in.size(), in.ptr());
      const Tensor y = compressed(ps, in, required_scope(m), cfg);
      CHECK(y.size() / out == token_budget(N, l, k).l_decoder);
    }
  }
  CompressorConfig base{FusionMethod::Baseline, 1, out, l, 2, 2};
  CHECK(compressed(compressor_params(base, h, l, 12, 1.0), encoded, EncoderScope::PerFrame, base).size() / out == N * l);
}

TEST_CASE("compress at the 224/14 grid") {
  const std::size_t T = 256, h = 4, out = 4;
  Rng rng(13);
  for (FusionMethod m : kAllMethods) {
    CAPTURE(method_name(m));
    const std::size_t N = m == FusionMethod::Baseline ? 4 : 16, k = m == FusionMethod::Baseline ? 1 : 4;
    CompressorConfig cfg{m, k, out, 64, 1, 2};
    const ParamSet ps = compressor_params(cfg, h, 64, 14, 1.0);
    const std::size_t frames = m == FusionMethod::PreEncoderChannelMerge ? N / k : N;
    const Tensor y = compressed(ps, Tensor::randn({1, frames, T, h}, rng), required_scope(m), cfg);
    CHECK(y.size() / out == 256);
  }
}

TEST_CASE("compress rejects a mismatched encoder scope") {
  Rng rng(15);
  const Tensor enc = Tensor::randn({1, 4, 16, 8}, rng);
  CompressorConfig te{FusionMethod::ThroughEncoder, 2, 8, 4, 2, 2};
  CHECK(kind_of([&] { compressed(compressor_params(te, 8, 4, 1, 1.0), enc, EncoderScope::PerFrame, te); }) ==
        ErrorKind::ScopeMismatch);
  CompressorConfig base{FusionMethod::Baseline, 1, 8, 4, 2, 2};
  CHECK(kind_of([&] { compressed(compressor_params(base, 8, 4, 1, 1.0), enc, EncoderScope::PerGroup, base); }) ==
        ErrorKind::ScopeMismatch);
  CompressorConfig pool{FusionMethod::PostPoolPLLaVA, 3, 8, 4, 2, 2};
  CHECK(kind_of([&] { compressed(compressor_params(pool, 8, 4, 1, 1.0), enc, EncoderScope::PerFrame, pool); }) ==
        ErrorKind::IndivisibleFrames);
}

TEST_CASE("degeneracy chain at k = 1") {
  Rng rng(16);
  const Tensor pixels = Tensor::uniform({2, 4, 1, 8, 8}, rng, 0.0, 1.0);
  const Model base = Model::init(tiny_model(FusionMethod::Baseline, 1, 4), 20);
  const auto tokens = [&](const Model& m) {
    Tape t;
    ParamBinding p(t, m.params(), false);
    return m.video_tokens(p, pixels).value();
  };
  const auto encoded = [&](const Model& m) {
    Tape t;
    ParamBinding p(t, m.params(), false);
    return m.encoded(p, pixels).value();
  };
  const Tensor ref = tokens(base);

  SUBCASE("through-encoder matches baseline bitwise") {
    Model te = Model::init(tiny_model(FusionMethod::ThroughEncoder, 1, 4), 21);
    copy_shared(base.params(), te.params());
    te.params().at("fe.temporal") = Tensor::zeros(te.params().at("fe.temporal").shape());
    CHECK(bit_equal(encoded(te), encoded(base)));
    CHECK(bit_equal(tokens(te), ref));
  }
  SUBCASE("identity kangaroo matches baseline") {
    Model kg = Model::init(tiny_model(FusionMethod::PostMLPKangaroo, 1, 4), 22);
    copy_shared(base.params(), kg.params());
    init_kangaroo_identity(kg.params(), 8, 1);
    CHECK(max_abs_diff(tokens(kg), ref) <= 1e-12);
  }
  SUBCASE("pllava pooling is the identity") {
    Model pl = Model::init(tiny_model(FusionMethod::PostPoolPLLaVA, 1, 4), 23);
    copy_shared(base.params(), pl.params());
    CHECK(bit_equal(tokens(pl), ref));
  }
}

TEST_CASE("through-encoder is sensitive to frame order inside a group") {
  Rng rng(17);
  const Tensor pixels = Tensor::uniform({1, 4, 1, 8, 8}, rng, 0.0, 1.0);
  Tensor swapped = pixels;
  std::copy_n(pixels.ptr() + 64, 64, swapped.ptr());
  std::copy_n(pixels.ptr(), 64, swapped.ptr() + 64);
  Model te = Model::init(tiny_model(FusionMethod::ThroughEncoder, 2, 4), 24);
  for (std::size_t i = 0; i < te.params().size(); ++i) {
    for (double& v : te.params().value(i).data()) v *= 20.0;
  }
  const auto tokens = [&](const Model& m, const Tensor& px) {
    Tape t;
    ParamBinding p(t, m.params(), false);
    return m.video_tokens(p, px).value();
  };
  CHECK(max_abs_diff(tokens(te, pixels), tokens(te, swapped)) > 1e-6);

  Model pl = Model::init(tiny_model(FusionMethod::PostPoolPLLaVA, 2, 4), 25);
  CHECK(max_abs_diff(tokens(pl, pixels), tokens(pl, swapped)) < 1e-12);
}

TEST_CASE("compress is differentiable for every method") {
  const std::size_t T = 16, h = 4, l = 4, out = 4;
  Rng rng(18);
  for (FusionMethod m : kAllMethods) {
    CAPTURE(method_name(m));
    const std::size_t k = m == FusionMethod::Baseline ? 1 : 2;
    CompressorConfig cfg{m, k, out, l, 1, 2};
    const ParamSet ps = compressor_params(cfg, h, l, 19, 10.0);
    const std::size_t frames = m == FusionMethod::PreEncoderChannelMerge ? 1 : 2;
    const Tensor enc = Tensor::randn({1, frames, T, h}, rng);
    ParamLossFn f = [&](ParamBinding& p) {
      return tfz::testing::weighted_sum(compress(p, p.tape().constant(enc), required_scope(m), cfg));
    };
    const GradCheckReport rep = finite_diff_check(f, ps, 1e-5, 1e-4);
    CAPTURE(rep.worst);
    CHECK(rep.pass);
  }
}
