#include "tfz/numerics/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "tfz/errors.hpp"
#include "tfz/numerics/kernels.hpp"

namespace tfz {

namespace {

std::atomic<KernelBackend> g_backend{KernelBackend::Parallel};

void gemm(const kernels::GemmDims& d, const double* a, const double* b, double* c) {
  if (g_backend.load(std::memory_order_relaxed) == KernelBackend::Serial) {
    kernels::serial::gemm(d, a, b, c);
  } else {
    kernels::parallel::gemm(d, a, b, c);
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, const double* x, double* y) {
  if (g_backend.load(std::memory_order_relaxed) == KernelBackend::Serial) {
    kernels::serial::softmax_rows(rows, cols, x, y);
  } else {
    kernels::parallel::softmax_rows(rows, cols, x, y);
  }
}

Tape* tape_of(Var v) {
  if (!v.valid()) throw Error(ErrorKind::InvalidArgument, "operation on an unbound Var");
  return v.tape;
}

std::size_t norm_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw Error(ErrorKind::ShapeMismatch, "axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(a);
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

bool is_suffix(const Shape& whole, const Shape& part) {
  if (part.size() > whole.size()) return false;
  return std::equal(part.begin(), part.end(), whole.end() - static_cast<std::ptrdiff_t>(part.size()));
}

Tensor permute_tensor(const Tensor& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  Shape out_shape(r);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[perm[i]];
    src_stride[i] = in_strides[perm[i]];
  }
  Tensor y(out_shape);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  const std::size_t n = y.size();
  for (std::size_t o = 0; o < n; ++o) {
    y[o] = x[src];
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      src += src_stride[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return y;
}

}  // namespace

void set_kernel_backend(KernelBackend backend) { g_backend.store(backend); }
KernelBackend kernel_backend() { return g_backend.load(); }

Var add(Var a, Var b) {
  Tape* t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!is_suffix(av.shape(), bv.shape())) {
    throw Error(ErrorKind::ShapeMismatch, "add " + shape_str(av.shape()) + " + " + shape_str(bv.shape()));
  }
  const std::size_t nb = bv.size();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i % nb];
  return t->record("add", std::move(y), {a, b}, [a, b, nb](const Tensor& g, GradBuffer& gb) {
    gb.accumulate(a, g);
    if (gb.wants(b)) {
      Tensor db(b.shape());
      for (std::size_t i = 0; i < g.size(); ++i) db[i % nb] += g[i];
      gb.accumulate(b, std::move(db));
    }
  });
}

Var mul(Var a, Var b) {
  Tape* t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "mul " + shape_str(av.shape()) + " * " + shape_str(bv.shape()));
  }
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return t->record("mul", std::move(y), {a, b}, [a, b](const Tensor& g, GradBuffer& gb) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (gb.wants(a)) {
      Tensor da(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * bv[i];
      gb.accumulate(a, std::move(da));
    }
    if (gb.wants(b)) {
      Tensor db(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * av[i];
      gb.accumulate(b, std::move(db));
    }
  });
}

Var scale(Var x, double c) {
  Tape* t = tape_of(x);
  Tensor y = x.value();
  for (auto& v : y.data()) v *= c;
  return t->record("scale", std::move(y), {x}, [x, c](const Tensor& g, GradBuffer& gb) {
    Tensor dx = g;
    for (auto& v : dx.data()) v *= c;
    gb.accumulate(x, std::move(dx));
  });
}

Var sum(Var x) {
  Tape* t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return t->record("sum", Tensor::scalar(s), {x}, [x](const Tensor& g, GradBuffer& gb) {
    gb.accumulate(x, Tensor::full(x.shape(), g[0]));
  });
}

Var mean_over_axis(Var x, int axis) {
  Tape* t = tape_of(x);
  const Shape& s = x.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  const std::size_t outer = prod(s, 0, ax), n = s[ax], inner = prod(s, ax + 1, s.size());
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  Tensor y(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += xv[(o * n + j) * inner + i];
      y[o * inner + i] = acc / static_cast<double>(n);
    }
  }
  return t->record("mean_over_axis", std::move(y), {x}, [x, outer, n, inner](const Tensor& g, GradBuffer& gb) {
    Tensor dx(x.shape());
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < inner; ++i) dx[(o * n + j) * inner + i] = g[o * inner + i] * inv;
      }
    }
    gb.accumulate(x, std::move(dx));
  });
}

Var reshape(Var x, Shape shape) {
  Tape* t = tape_of(x);
  Tensor y = x.value().reshaped(std::move(shape));
  return t->record("reshape", std::move(y), {x}, [x](const Tensor& g, GradBuffer& gb) {
    gb.accumulate(x, g.reshaped(x.shape()));
  });
}

Var permute(Var x, std::vector<std::size_t> perm) {
  Tape* t = tape_of(x);
  const std::size_t r = x.shape().size();
  if (perm.size() != r) throw Error(ErrorKind::ShapeMismatch, "permutation rank mismatch for " + shape_str(x.shape()));
  std::vector<std::size_t> inverse(r, r);
  for (std::size_t i = 0; i < r; ++i) {
    if (perm[i] >= r || inverse[perm[i]] != r) throw Error(ErrorKind::InvalidArgument, "not a permutation");
    inverse[perm[i]] = i;
  }
  Tensor y = permute_tensor(x.value(), perm);
  return t->record("permute", std::move(y), {x}, [x, inverse](const Tensor& g, GradBuffer& gb) {
    gb.accumulate(x, permute_tensor(g, inverse));
  });
}

Var concat_axis(std::span<const Var> xs, int axis) {
  if (xs.empty()) throw Error(ErrorKind::InvalidArgument, "concat of nothing");
  Tape* t = tape_of(xs[0]);
  const Shape& s0 = xs[0].shape();
  const std::size_t ax = norm_axis(axis, s0.size());
  const std::size_t outer = prod(s0, 0, ax), inner = prod(s0, ax + 1, s0.size());
  Shape out_shape = s0;
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const Var& v : xs) {
    const Shape& s = v.shape();
    if (s.size() != s0.size()) throw Error(ErrorKind::ShapeMismatch, "concat " + shape_str(s0) + " with " + shape_str(s));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != ax && s[d] != s0[d]) {
        throw Error(ErrorKind::ShapeMismatch, "concat " + shape_str(s0) + " with " + shape_str(s));
      }
    }
    extents.push_back(s[ax]);
    out_shape[ax] += s[ax];
  }
  Tensor y(out_shape);
  const std::size_t out_chunk = out_shape[ax] * inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& xv = xs[k].value();
    const std::size_t chunk = extents[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(xv.ptr() + o * chunk, chunk, y.ptr() + o * out_chunk + offset);
    }
    offset += chunk;
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return t->record("concat_axis", std::move(y), xs, [inputs, extents, outer, inner, out_chunk](const Tensor& g, GradBuffer& gb) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const std::size_t chunk = extents[k] * inner;
      if (gb.wants(inputs[k])) {
        Tensor dx(inputs[k].shape());
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(g.ptr() + o * out_chunk + offset, chunk, dx.ptr() + o * chunk);
        }
        gb.accumulate(inputs[k], std::move(dx));
      }
      offset += chunk;
    }
  });
}

Var slice_axis(Var x, int axis, std::size_t start, std::size_t length) {
  Tape* t = tape_of(x);
  const Shape& s = x.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  if (length == 0 || start + length > s[ax]) {
    throw Error(ErrorKind::ShapeMismatch, "slice [" + std::to_string(start) + "," + std::to_string(start + length) +
                                              ") of " + shape_str(s));
  }
  const std::size_t outer = prod(s, 0, ax), inner = prod(s, ax + 1, s.size());
  const std::size_t in_chunk = s[ax] * inner, out_chunk = length * inner;
  Shape out_shape = s;
  out_shape[ax] = length;
  Tensor y(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.ptr() + o * in_chunk + start * inner, out_chunk, y.ptr() + o * out_chunk);
  }
  return t->record("slice_axis", std::move(y), {x},
                   [x, outer, inner, in_chunk, out_chunk, start](const Tensor& g, GradBuffer& gb) {
                     Tensor dx(x.shape());
                     for (std::size_t o = 0; o < outer; ++o) {
                       std::copy_n(g.ptr() + o * out_chunk, out_chunk, dx.ptr() + o * in_chunk + start * inner);
                     }
                     gb.accumulate(x, std::move(dx));
                   });
}

Var expand_prefix(Var x, const Shape& prefix) {
  Tape* t = tape_of(x);
  const std::size_t copies = numel(prefix);
  Shape out_shape = prefix;
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  Tensor y(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t c = 0; c < copies; ++c) std::copy_n(xv.ptr(), xv.size(), y.ptr() + c * xv.size());
  return t->record("expand_prefix", std::move(y), {x}, [x, copies](const Tensor& g, GradBuffer& gb) {
    Tensor dx(x.shape());
    const std::size_t n = dx.size();
    for (std::size_t c = 0; c < copies; ++c) {
      for (std::size_t i = 0; i < n; ++i) dx[i] += g[c * n + i];
    }
    gb.accumulate(x, std::move(dx));
  });
}

Var matmul(Var a, Var b) {
  Tape* t = tape_of(a);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto mismatch = [&] { return Error(ErrorKind::ShapeMismatch, "matmul " + shape_str(as) + " x " + shape_str(bs)); };
  if (as.size() < 2 || bs.size() < 2) throw mismatch();
  const std::size_t m = as[as.size() - 2], p = as.back(), n = bs.back();
  if (bs[bs.size() - 2] != p) throw mismatch();
  const Shape pa(as.begin(), as.end() - 2), pb(bs.begin(), bs.end() - 2);
  Shape prefix;
  kernels::GemmDims d;
  d.m = m;
  d.n = n;
  d.p = p;
  if (pa == pb) {
    prefix = pa;
    d.stride_a = m * p;
    d.stride_b = p * n;
  } else if (pb.empty()) {
    prefix = pa;
    d.stride_a = m * p;
  } else if (pa.empty()) {
    prefix = pb;
    d.stride_b = p * n;
  } else {
    throw mismatch();
  }
  d.batch = numel(prefix);
  Shape out_shape = prefix;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor y(out_shape);
  gemm(d, a.value().ptr(), b.value().ptr(), y.ptr());
  return t->record("matmul", std::move(y), {a, b}, [a, b, d](const Tensor& g, GradBuffer& gb) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (gb.wants(a)) {
      // dA_b = G_b B_b^T
      kernels::GemmDims e;
      e.batch = d.batch;
      e.m = d.m;
      e.n = d.p;
      e.p = d.n;
      e.stride_a = d.m * d.n;
      e.stride_b = d.stride_b;
      e.trans_b = true;
      Tensor full(Shape{d.batch, d.m, d.p});
      gemm(e, g.ptr(), bv.ptr(), full.ptr());
      if (d.stride_a == 0 && d.batch > 1) {
        Tensor da(a.shape());
        const std::size_t sz = d.m * d.p;
        for (std::size_t bi = 0; bi < d.batch; ++bi) {
          for (std::size_t i = 0; i < sz; ++i) da[i] += full[bi * sz + i];
        }
        gb.accumulate(a, std::move(da));
      } else {
        gb.accumulate(a, std::move(full).reshaped(a.shape()));
      }
    }
    if (gb.wants(b)) {
      Tensor db(b.shape());
      if (d.stride_b == 0 && d.batch > 1) {
        // B shared: stack the batch into rows, one product A^T G.
        kernels::GemmDims e;
        e.m = d.p;
        e.n = d.n;
        e.p = d.batch * d.m;
        e.trans_a = true;
        gemm(e, av.ptr(), g.ptr(), db.ptr());
      } else {
        kernels::GemmDims e;
        e.batch = d.batch;
        e.m = d.p;
        e.n = d.n;
        e.p = d.m;
        e.stride_a = d.stride_a;
        e.stride_b = d.m * d.n;
        e.trans_a = true;
        gemm(e, av.ptr(), g.ptr(), db.ptr());
      }
      gb.accumulate(b, std::move(db));
    }
  });
}

Var linear(Var x, Var w, Var bias) {
  Tape* t = tape_of(x);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.empty() || ws.size() != 2 || xs.back() != ws[0]) {
    throw Error(ErrorKind::ShapeMismatch, "linear " + shape_str(xs) + " x " + shape_str(ws));
  }
  const std::size_t in = ws[0], out = ws[1];
  if (bias.valid() && bias.shape() != Shape{out}) {
    throw Error(ErrorKind::ShapeMismatch, "linear bias " + shape_str(bias.shape()) + " for width " + std::to_string(out));
  }
  const std::size_t rows = x.value().size() / in;
  Shape out_shape = xs;
  out_shape.back() = out;
  Tensor y(out_shape);
  kernels::GemmDims d;
  d.m = rows;
  d.n = out;
  d.p = in;
  gemm(d, x.value().ptr(), w.value().ptr(), y.ptr());
  if (bias.valid()) {
    const Tensor& bv = bias.value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out; ++j) y[r * out + j] += bv[j];
    }
  }
  auto fn = [x, w, bias, rows, in, out](const Tensor& g, GradBuffer& gb) {
    if (gb.wants(x)) {
      kernels::GemmDims e;
      e.m = rows;
      e.n = in;
      e.p = out;
      e.trans_b = true;
      Tensor dx(x.shape());
      gemm(e, g.ptr(), w.value().ptr(), dx.ptr());
      gb.accumulate(x, std::move(dx));
    }
    if (gb.wants(w)) {
      kernels::GemmDims e;
      e.m = in;
      e.n = out;
      e.p = rows;
      e.trans_a = true;
      Tensor dw(w.shape());
      gemm(e, x.value().ptr(), g.ptr(), dw.ptr());
      gb.accumulate(w, std::move(dw));
    }
    if (bias.valid() && gb.wants(bias)) {
      Tensor db(bias.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < out; ++j) db[j] += g[r * out + j];
      }
      gb.accumulate(bias, std::move(db));
    }
  };
  if (bias.valid()) return t->record("linear", std::move(y), {x, w, bias}, fn);
  return t->record("linear", std::move(y), {x, w}, fn);
}

Var softmax_lastdim(Var x) {
  Tape* t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t cols = xv.shape().empty() ? 1 : xv.shape().back();
  const std::size_t rows = xv.size() / cols;
  Tensor y(xv.shape());
  softmax_rows(rows, cols, xv.ptr(), y.ptr());
  Tensor saved = y;
  return t->record("softmax_lastdim", std::move(y), {x}, [x, saved, rows, cols](const Tensor& g, GradBuffer& gb) {
    Tensor dx(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * saved[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        dx[r * cols + j] = saved[r * cols + j] * (g[r * cols + j] - dot);
      }
    }
    gb.accumulate(x, std::move(dx));
  });
}

Var rms_norm(Var x, Var gain, double eps) {
  Tape* t = tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  if (xv.shape().empty() || gv.shape() != Shape{xv.shape().back()}) {
    throw Error(ErrorKind::ShapeMismatch, "rms_norm " + shape_str(xv.shape()) + " with gain " + shape_str(gv.shape()));
  }
  const std::size_t h = gv.size();
  const std::size_t rows = xv.size() / h;
  Tensor y(xv.shape());
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.ptr() + r * h;
    double ms = 0.0;
    for (std::size_t j = 0; j < h; ++j) ms += xr[j] * xr[j];
    ms /= static_cast<double>(h);
    inv[r] = 1.0 / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < h; ++j) y[r * h + j] = xr[j] * inv[r] * gv[j];
  }
  return t->record("rms_norm", std::move(y), {x, gain}, [x, gain, inv, rows, h](const Tensor& g, GradBuffer& gb) {
    const Tensor& xv = x.value();
    const Tensor& gv = gain.value();
    if (gb.wants(x)) {
      Tensor dx(xv.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.ptr() + r * h;
        const double* gr = g.ptr() + r * h;
        double dot = 0.0;
        for (std::size_t j = 0; j < h; ++j) dot += gr[j] * gv[j] * xr[j];
        const double c = inv[r] * inv[r] * inv[r] * dot / static_cast<double>(h);
        for (std::size_t j = 0; j < h; ++j) dx[r * h + j] = inv[r] * gv[j] * gr[j] - xr[j] * c;
      }
      gb.accumulate(x, std::move(dx));
    }
    if (gb.wants(gain)) {
      Tensor dg(gv.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < h; ++j) dg[j] += g[r * h + j] * xv[r * h + j] * inv[r];
      }
      gb.accumulate(gain, std::move(dg));
    }
  });
}

namespace {

const double kGeluC = std::sqrt(2.0 / std::numbers::pi);  // 0.7978845608...
constexpr double kGeluA = 0.044715;

}  // namespace

Var gelu(Var x) {
  Tape* t = tape_of(x);
  Tensor y = x.value();
  for (auto& v : y.data()) v = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  return t->record("gelu", std::move(y), {x}, [x](const Tensor& g, GradBuffer& gb) {
    const Tensor& xv = x.value();
    Tensor dx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      dx[i] = g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner);
    }
    gb.accumulate(x, std::move(dx));
  });
}

Var attention(Var q, Var k, Var v, const Tensor* mask, Tensor* weights_out) {
  Tape* t = tape_of(q);
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  const Shape& vs = v.shape();
  auto mismatch = [&] {
    return Error(ErrorKind::ShapeMismatch,
                 "attention q" + shape_str(qs) + " k" + shape_str(ks) + " v" + shape_str(vs));
  };
  if (qs.size() < 2 || ks.size() != qs.size() || vs.size() != qs.size()) throw mismatch();
  const std::size_t r = qs.size();
  const Shape prefix(qs.begin(), qs.end() - 2);
  if (!std::equal(prefix.begin(), prefix.end(), ks.begin()) || !std::equal(prefix.begin(), prefix.end(), vs.begin())) {
    throw mismatch();
  }
  kernels::AttentionDims d;
  d.batch = numel(prefix);
  d.tq = qs[r - 2];
  d.d = qs[r - 1];
  d.tk = ks[r - 2];
  d.dv = vs[r - 1];
  if (ks[r - 1] != d.d || vs[r - 2] != d.tk) throw mismatch();
  d.scale = 1.0 / std::sqrt(static_cast<double>(d.d));

  std::size_t mask_count = 0;
  if (mask) {
    const Shape& ms = mask->shape();
    Shape with_prefix = prefix;
    with_prefix.push_back(d.tq);
    with_prefix.push_back(d.tk);
    if (ms == Shape{d.tq, d.tk}) {
      d.mask_stride = 0;
      mask_count = 1;
    } else if (ms == with_prefix) {
      d.mask_stride = d.tq * d.tk;
      mask_count = d.batch;
    } else {
      throw Error(ErrorKind::ShapeMismatch, "attention mask " + shape_str(ms) + " for scores [" +
                                                std::to_string(d.tq) + "," + std::to_string(d.tk) + "]");
    }
    for (std::size_t mi = 0; mi < mask_count; ++mi) {
      for (std::size_t i = 0; i < d.tq; ++i) {
        const double* row = mask->ptr() + mi * d.tq * d.tk + i * d.tk;
        bool any = false;
        for (std::size_t j = 0; j < d.tk && !any; ++j) any = row[j] > kernels::kBlockedScore;
        if (!any) throw Error(ErrorKind::AllMaskedRow, "query row " + std::to_string(i) + " has no allowed key");
      }
    }
  }

  Shape out_shape = prefix;
  out_shape.push_back(d.tq);
  out_shape.push_back(d.dv);
  Tensor out(out_shape);
  Tensor probs(Shape{d.batch, d.tq, d.tk});
  const double* mp = mask ? mask->ptr() : nullptr;
  if (g_backend.load(std::memory_order_relaxed) == KernelBackend::Serial) {
    kernels::serial::attention_forward(d, q.value().ptr(), k.value().ptr(), v.value().ptr(), mp, out.ptr(), probs.ptr());
  } else {
    kernels::parallel::attention_forward(d, q.value().ptr(), k.value().ptr(), v.value().ptr(), mp, out.ptr(),
                                         probs.ptr());
  }
  if (weights_out) {
    Shape ws = prefix;
    ws.push_back(d.tq);
    ws.push_back(d.tk);
    *weights_out = probs.reshaped(ws);
  }
  return t->record("attention", std::move(out), {q, k, v}, [q, k, v, d, probs](const Tensor& g, GradBuffer& gb) {
    Tensor dq(q.shape()), dk(k.shape()), dv(v.shape());
    if (g_backend.load(std::memory_order_relaxed) == KernelBackend::Serial) {
      kernels::serial::attention_backward(d, q.value().ptr(), k.value().ptr(), v.value().ptr(), probs.ptr(), g.ptr(),
                                          dq.ptr(), dk.ptr(), dv.ptr());
    } else {
      kernels::parallel::attention_backward(d, q.value().ptr(), k.value().ptr(), v.value().ptr(), probs.ptr(), g.ptr(),
                                            dq.ptr(), dk.ptr(), dv.ptr());
    }
    gb.accumulate(q, std::move(dq));
    gb.accumulate(k, std::move(dk));
    gb.accumulate(v, std::move(dv));
  });
}

Var rope(Var x, double base) {
  Tape* t = tape_of(x);
  const Shape& s = x.shape();
  if (s.size() < 2 || s.back() % 2 != 0) throw Error(ErrorKind::ShapeMismatch, "rope needs [.., S, even d], got " + shape_str(s));
  const std::size_t seq = s[s.size() - 2], d = s.back(), half = d / 2;
  const std::size_t outer = x.value().size() / (seq * d);
  std::vector<double> cs(seq * half), sn(seq * half);
  for (std::size_t p = 0; p < seq; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double theta = static_cast<double>(p) * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      cs[p * half + i] = std::cos(theta);
      sn[p * half + i] = std::sin(theta);
    }
  }
  auto rotate = [=](const Tensor& in, double sign) {
    Tensor y(in.shape());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t p = 0; p < seq; ++p) {
        const double* xr = in.ptr() + (o * seq + p) * d;
        double* yr = y.ptr() + (o * seq + p) * d;
        for (std::size_t i = 0; i < half; ++i) {
          const double c = cs[p * half + i], sv = sign * sn[p * half + i];
          const double x0 = xr[2 * i], x1 = xr[2 * i + 1];
          yr[2 * i] = x0 * c - x1 * sv;
          yr[2 * i + 1] = x0 * sv + x1 * c;
        }
      }
    }
    return y;
  };
  Tensor y = rotate(x.value(), 1.0);
  return t->record("rope", std::move(y), {x}, [x, rotate](const Tensor& g, GradBuffer& gb) {
    gb.accumulate(x, rotate(g, -1.0));
  });
}

Var embedding_lookup(Var table, std::span<const std::size_t> ids, const Shape& ids_shape) {
  Tape* t = tape_of(table);
  const Shape& ts = table.shape();
  if (ts.size() != 2 || numel(ids_shape) != ids.size()) {
    throw Error(ErrorKind::ShapeMismatch, "embedding table " + shape_str(ts) + " with ids " + shape_str(ids_shape));
  }
  const std::size_t vocab = ts[0], h = ts[1];
  Shape out_shape = ids_shape;
  out_shape.push_back(h);
  Tensor y(out_shape);
  const Tensor& tv = table.value();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) throw Error(ErrorKind::InvalidArgument, "token id " + std::to_string(ids[i]) + " >= vocab");
    std::copy_n(tv.ptr() + ids[i] * h, h, y.ptr() + i * h);
  }
  std::vector<std::size_t> saved(ids.begin(), ids.end());
  return t->record("embedding_lookup", std::move(y), {table}, [table, saved, h](const Tensor& g, GradBuffer& gb) {
    Tensor dt(table.shape());
    for (std::size_t i = 0; i < saved.size(); ++i) {
      for (std::size_t j = 0; j < h; ++j) dt[saved[i] * h + j] += g[i * h + j];
    }
    gb.accumulate(table, std::move(dt));
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  Tape* t = tape_of(logits);
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != targets.size()) {
    throw Error(ErrorKind::ShapeMismatch, "cross_entropy logits " + shape_str(s) + " with " +
                                              std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = s[0], cols = s[1];
  const Tensor& lv = logits.value();
  Tensor probs(s);
  softmax_rows(rows, cols, lv.ptr(), probs.ptr());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) throw Error(ErrorKind::InvalidArgument, "target out of range");
    const double* lr = lv.ptr() + r * cols;
    double mx = lr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, lr[j]);
    double se = 0.0;
    for (std::size_t j = 0; j < cols; ++j) se += std::exp(lr[j] - mx);
    loss += mx + std::log(se) - lr[targets[r]];
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> saved(targets.begin(), targets.end());
  return t->record("cross_entropy", Tensor::scalar(loss), {logits},
                   [logits, probs, saved, rows, cols](const Tensor& g, GradBuffer& gb) {
                     Tensor dl = probs;
                     const double c = g[0] / static_cast<double>(rows);
                     for (std::size_t r = 0; r < rows; ++r) {
                       dl[r * cols + saved[r]] -= 1.0;
                       for (std::size_t j = 0; j < cols; ++j) dl[r * cols + j] *= c;
                     }
                     gb.accumulate(logits, std::move(dl));
                   });
}

}  // namespace tfz
