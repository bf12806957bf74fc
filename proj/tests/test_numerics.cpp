#include <cmath>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "tfz/errors.hpp"
#include "tfz/numerics/checkpoint.hpp"
#include "tfz/numerics/kernels.hpp"

using namespace tfz;
using tfz::testing::check_op;

namespace {

Tensor mk(Shape s, std::vector<double> v) { return Tensor(std::move(s), std::move(v)); }

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), Error);
  CHECK_THROWS_AS(mk({2, 2}, {1, 2, 3}), Error);
  Tensor t = mk({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at({1, 2}) == 6);
  CHECK(t.reshaped({3, 2}).reshaped({2, 3}) == t);
  CHECK_THROWS_AS(t.reshaped({4, 2}), Error);
}

TEST_CASE("rng determinism") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
  }
  Rng r1(7), r2(7);
  CHECK(bit_equal(Tensor::randn({4, 5}, r1), Tensor::randn({4, 5}, r2)));
  CHECK(Rng(1).next_u64() != c.next_u64());
  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    CHECK(u.below(7) < 7);
  }
  CHECK(mix_seed({1, 2}) != mix_seed({2, 1}));
}

TEST_CASE("matmul examples") {
  Tape t;
  Var a = t.leaf(mk({2, 2}, {1, 0, 0, 1}));
  Var b = t.leaf(mk({2, 2}, {3, 4, 5, 6}));
  CHECK(matmul(a, b).value() == mk({2, 2}, {3, 4, 5, 6}));
  Var r = t.leaf(mk({1, 2}, {1, 2}));
  Var c = t.leaf(mk({2, 1}, {3, 4}));
  CHECK(matmul(r, c).value().item() == 11.0);

  Rng rng(1);
  auto report = check_op([](auto x) { return matmul(x[0], x[1]); },
                         {Tensor::randn({3, 4}, rng), Tensor::randn({4, 2}, rng)});
  CHECK(report.max_rel_err < 1e-6);

  // sum(a b) against the plain-sum loss named in the example
  TensorLossFn f = [](Tape&, std::span<const Var> x) { return sum(matmul(x[0], x[1])); };
  CHECK(finite_diff_check(f, {Tensor::randn({3, 4}, rng), Tensor::randn({4, 2}, rng)}, 1e-5, 1e-6).pass);
}

TEST_CASE("matmul shape errors name both shapes") {
  Tape t;
  Var a = t.leaf(Tensor({2, 3}));
  Var b = t.leaf(Tensor({4, 2}));
  try {
    matmul(a, b);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
    CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("batched matmul gradients, shared operands") {
  Rng rng(2);
  CHECK(check_op([](auto x) { return matmul(x[0], x[1]); },
                 {Tensor::randn({2, 3, 3, 4}, rng), Tensor::randn({2, 3, 4, 2}, rng)})
            .pass);
  CHECK(check_op([](auto x) { return matmul(x[0], x[1]); }, {Tensor::randn({3, 3, 4}, rng), Tensor::randn({4, 2}, rng)})
            .pass);
  CHECK(check_op([](auto x) { return matmul(x[0], x[1]); }, {Tensor::randn({3, 4}, rng), Tensor::randn({5, 4, 2}, rng)})
            .pass);
}

TEST_CASE("softmax examples") {
  Tape t;
  CHECK(max_abs_diff(softmax_lastdim(t.leaf(mk({3}, {0, 0, 0}))).value(), Tensor::full({3}, 1.0 / 3.0)) < 1e-15);
  Tensor big = softmax_lastdim(t.leaf(mk({2}, {1000, 0}))).value();
  CHECK(std::abs(big[0] - 1.0) < 1e-12);
  CHECK(big[1] < 1e-12);
  // direct-evaluation oracle (30-digit arithmetic), frozen
  Tensor y = softmax_lastdim(t.leaf(mk({3}, {1, 2, 3}))).value();
  CHECK(y[0] == doctest::Approx(0.09003057317).epsilon(1e-9));
  CHECK(y[1] == doctest::Approx(0.2447284711).epsilon(1e-9));
  CHECK(y[2] == doctest::Approx(0.6652409558).epsilon(1e-9));
}

TEST_CASE("softmax rows sum to one (property)") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(6), cols = 1 + rng.below(9);
    const double spread = std::pow(10.0, static_cast<double>(rng.below(4)));
    Tape t;
    Tensor y = softmax_lastdim(t.leaf(Tensor::randn({rows, cols}, rng, spread))).value();
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        CHECK(y[r * cols + c] >= 0.0);
        s += y[r * cols + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("rms_norm examples") {
  Tape t;
  Var ones3 = t.leaf(Tensor::full({3}, 1.0));
  CHECK(max_abs_diff(rms_norm(t.leaf(mk({3}, {2, 2, 2})), ones3, 0.0).value(), Tensor::full({3}, 1.0)) < 1e-15);
  Var ones2 = t.leaf(Tensor::full({2}, 1.0));
  CHECK(rms_norm(t.leaf(mk({2}, {0, 0})), ones2, 1e-6).value() == mk({2}, {0, 0}));
  Tensor y = rms_norm(t.leaf(mk({2}, {3, 4})), ones2, 0.0).value();
  CHECK(y[0] == doctest::Approx(0.8485281374).epsilon(1e-10));
  CHECK(y[1] == doctest::Approx(1.13137085).epsilon(1e-9));
  CHECK_THROWS_AS(rms_norm(t.leaf(Tensor({2, 3})), ones2, 1e-6), Error);
}

TEST_CASE("gelu examples") {
  Tape t;
  Tensor y = gelu(t.leaf(mk({3}, {0.0, 10.0, 1.0}))).value();
  CHECK(y[0] == 0.0);
  CHECK(std::abs(y[1] - 10.0) < 1e-6);
  CHECK(y[2] == doctest::Approx(0.8411919906).epsilon(1e-9));
}

TEST_CASE("attention examples") {
  Tape t;
  Rng rng(3);
  SUBCASE("single key returns v") {
    Var q = t.leaf(Tensor::randn({1, 4}, rng));
    Var k = t.leaf(Tensor::randn({1, 4}, rng));
    Var v = t.leaf(Tensor::randn({1, 3}, rng));
    Tensor mask({1, 1});
    CHECK(max_abs_diff(attention(q, k, v, &mask).value(), v.value()) == 0.0);
  }
  SUBCASE("uniform scores average v") {
    Var q = t.leaf(Tensor::full({2, 4}, 0.5));
    Var k = t.leaf(Tensor::full({3, 4}, 0.5));
    Var v = t.leaf(mk({3, 2}, {1, 2, 3, 4, 5, 9}));
    Tensor y = attention(q, k, v).value();
    CHECK(y.at({0, 0}) == doctest::Approx(3.0));
    CHECK(y.at({1, 1}) == doctest::Approx(5.0));
  }
  SUBCASE("blocked key gets exactly zero weight") {
    Var q = t.leaf(Tensor::randn({2, 4}, rng));
    Var k = t.leaf(Tensor::randn({3, 4}, rng));
    Var v = t.leaf(Tensor::randn({3, 2}, rng));
    Tensor mask({2, 3});
    mask.at({0, 1}) = kernels::kMaskSentinel;
    mask.at({1, 1}) = kernels::kMaskSentinel;
    Tensor w;
    attention(q, k, v, &mask, &w);
    CHECK(w.at({0, 1}) == 0.0);
    CHECK(w.at({1, 1}) == 0.0);
    CHECK(w.at({0, 0}) + w.at({0, 2}) == doctest::Approx(1.0));
    CHECK(w.at({0, 0}) > 0.0);
  }
  SUBCASE("fully masked row is an error") {
    Var q = t.leaf(Tensor::randn({2, 4}, rng));
    Var k = t.leaf(Tensor::randn({2, 4}, rng));
    Tensor mask({2, 2});
    mask.at({1, 0}) = kernels::kMaskSentinel;
    mask.at({1, 1}) = kernels::kMaskSentinel;
    try {
      attention(q, k, k, &mask);
      FAIL("expected AllMaskedRow");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::AllMaskedRow);
    }
  }
  SUBCASE("all-zeros mask equals no mask") {
    Var q = t.leaf(Tensor::randn({2, 3, 5, 4}, rng));
    Var k = t.leaf(Tensor::randn({2, 3, 6, 4}, rng));
    Var v = t.leaf(Tensor::randn({2, 3, 6, 2}, rng));
    Tensor zeros({5, 6});
    CHECK(bit_equal(attention(q, k, v, &zeros).value(), attention(q, k, v).value()));
  }
}

TEST_CASE("backward examples") {
  Tape t;
  Var x = t.leaf(mk({2, 2}, {1, -2, 3, 4}), true);
  Gradients g = backward(t, sum(x));
  CHECK(g[x] == Tensor::full({2, 2}, 1.0));

  Tape t2;
  Var s = t2.leaf(Tensor::scalar(3.0), true);
  CHECK(backward(t2, sum(mul(s, s)))[s].item() == 6.0);

  Tape t3;
  Var y = t3.leaf(Tensor({2}), true);
  CHECK_THROWS_AS(backward(t3, scale(y, 2.0)), Error);

  // Leaves off the loss path get zeros.
  Tape t4;
  Var used = t4.leaf(Tensor::full({2}, 1.0), true);
  Var unused = t4.leaf(Tensor::full({3}, 1.0), true);
  Gradients g4 = backward(t4, sum(used));
  CHECK(g4[unused] == Tensor::zeros({3}));
  CHECK_FALSE(g4.reached(unused));
}

TEST_CASE("finite_diff_check examples") {
  Rng rng(4);
  TensorLossFn squares = [](Tape&, std::span<const Var> x) { return sum(mul(x[0], x[0])); };
  auto r = finite_diff_check(squares, {Tensor::randn({5}, rng)}, 1e-5, 1e-8);
  CHECK(r.max_rel_err < 1e-8);
  CHECK(r.coordinates == 5);

  TensorLossFn dead = [](Tape&, std::span<const Var> x) { return sum(mul(x[0], x[0])); };
  auto rd = finite_diff_check(dead, {Tensor::randn({3}, rng), Tensor::randn({2}, rng)}, 1e-5, 1e-8);
  CHECK(rd.pass);
  CHECK(rel_err(0.0, 0.0) == 0.0);

  // rms_norm -> linear -> softmax -> cross-entropy
  TensorLossFn chain = [](Tape&, std::span<const Var> x) {
    Var h = rms_norm(x[0], x[1], 1e-6);
    Var logits = softmax_lastdim(linear(h, x[2], x[3]));
    const std::vector<std::size_t> targets{1, 0, 3};
    return cross_entropy(logits, targets);
  };
  auto rc = finite_diff_check(chain,
                              {Tensor::randn({3, 6}, rng), Tensor::uniform({6}, rng, 0.5, 1.5),
                               Tensor::randn({6, 4}, rng), Tensor::randn({4}, rng)},
                              1e-5, 1e-4);
  CHECK(rc.max_rel_err < 1e-4);

  CHECK_THROWS_AS(finite_diff_check(squares, {Tensor({2})}, 0.0, 1e-6), Error);
}

TEST_CASE("op-level gradient checks") {
  Rng rng(5);
  auto R = [&](Shape s) { return Tensor::randn(std::move(s), rng); };
  CHECK(check_op([](auto x) { return add(x[0], x[1]); }, {R({2, 3, 4}), R({3, 4})}).pass);
  CHECK(check_op([](auto x) { return add(x[0], x[1]); }, {R({2, 3}), R({2, 3})}).pass);
  CHECK(check_op([](auto x) { return mul(x[0], x[1]); }, {R({2, 3}), R({2, 3})}).pass);
  CHECK(check_op([](auto x) { return scale(x[0], -1.7); }, {R({4})}).pass);
  CHECK(check_op([](auto x) { return sum(x[0]); }, {R({2, 2})}).pass);
  CHECK(check_op([](auto x) { return mean_over_axis(x[0], 1); }, {R({2, 3, 4})}).pass);
  CHECK(check_op([](auto x) { return reshape(x[0], {6, 4}); }, {R({2, 3, 4})}).pass);
  CHECK(check_op([](auto x) { return permute(x[0], {2, 0, 1}); }, {R({2, 3, 4})}).pass);
  CHECK(check_op([](auto x) { return concat_axis(x, 1); }, {R({2, 3, 2}), R({2, 1, 2}), R({2, 2, 2})}).pass);
  CHECK(check_op([](auto x) { return slice_axis(x[0], 1, 1, 2); }, {R({2, 4, 3})}).pass);
  CHECK(check_op([](auto x) { return expand_prefix(x[0], {3, 2}); }, {R({2, 2})}).pass);
  CHECK(check_op([](auto x) { return linear(x[0], x[1], x[2]); }, {R({2, 3, 4}), R({4, 5}), R({5})}).pass);
  CHECK(check_op([](auto x) { return linear(x[0], x[1]); }, {R({3, 4}), R({4, 2})}).pass);
  CHECK(check_op([](auto x) { return softmax_lastdim(x[0]); }, {R({3, 5})}).pass);
  CHECK(check_op([](auto x) { return rms_norm(x[0], x[1], 1e-6); }, {R({3, 5}), R({5})}).pass);
  CHECK(check_op([](auto x) { return gelu(x[0]); }, {R({10})}).pass);
  CHECK(check_op([](auto x) { return rope(x[0], 10000.0); }, {R({2, 5, 6})}).pass);
  CHECK(check_op(
            [](auto x) {
              const std::vector<std::size_t> ids{3, 1, 3, 0};
              return embedding_lookup(x[0], ids, {2, 2});
            },
            {R({5, 3})})
            .pass);
  CHECK(check_op(
            [](auto x) {
              const std::vector<std::size_t> targets{2, 0};
              return cross_entropy(x[0], targets);
            },
            {R({2, 4})})
            .pass);

  Tensor mask({4, 5});
  for (std::size_t i = 0; i < 4; ++i) mask.at({i, (i + 2) % 5}) = kernels::kMaskSentinel;
  CHECK(check_op([&](auto x) { return attention(x[0], x[1], x[2], &mask); }, {R({2, 4, 3}), R({2, 5, 3}), R({2, 5, 2})})
            .pass);
}

TEST_CASE("rope at position zero is the identity") {
  Rng rng(6);
  Tape t;
  Var x = t.leaf(Tensor::randn({1, 8}, rng));
  CHECK(bit_equal(rope(x, 10000.0).value(), x.value()));
}

TEST_CASE("checkpoint round trip and errors") {
  Rng rng(8);
  ParamSet p;
  p.add_normal("a.w", {3, 2}, rng, 1.0);
  p.add("b", Tensor::scalar(-0.0));
  p.add_ones("c.gain", {4});
  std::stringstream buf;
  write_checkpoint(buf, p);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "TFZ1");
  // 4 magic + (4+3 + 4 + 16 + 48) + (4+1 + 4 + 0 + 8) + (4+6 + 4 + 8 + 32)
  CHECK(bytes.size() == 4 + 75 + 17 + 54);

  std::stringstream in(bytes);
  ParamSet q = read_checkpoint(in);
  CHECK(q.names() == p.names());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(bit_equal(p.value(i), q.value(i)));

  std::string bad = bytes;
  bad[3] = '2';
  std::stringstream bin(bad);
  try {
    read_checkpoint(bin);
    FAIL("expected BadMagic");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BadMagic);
  }

  std::stringstream tin(bytes.substr(0, bytes.size() - 3));
  try {
    read_checkpoint(tin);
    FAIL("expected TruncatedFile");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TruncatedFile);
  }

  ParamSet target;
  target.add_zeros("a.w", {3, 2});
  target.add_zeros("c.gain", {4});
  try {
    assign_checkpoint(target, q);
    FAIL("expected UnknownParameter");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownParameter);
  }
}
