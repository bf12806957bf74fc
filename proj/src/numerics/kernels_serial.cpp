#include <algorithm>
#include <cmath>
#include <vector>

#include "tfz/numerics/kernels.hpp"

namespace tfz::kernels::serial {

void gemm(const GemmDims& g, const double* a, const double* b, double* c) {
  for (std::size_t bi = 0; bi < g.batch; ++bi) {
    const double* ab = a + bi * g.stride_a;
    const double* bb = b + bi * g.stride_b;
    double* cb = c + bi * g.m * g.n;
    for (std::size_t i = 0; i < g.m; ++i) {
      for (std::size_t j = 0; j < g.n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < g.p; ++k) {
          const double x = g.trans_a ? ab[k * g.m + i] : ab[i * g.p + k];
          const double y = g.trans_b ? bb[j * g.p + k] : bb[k * g.n + j];
          s += x * y;
        }
        cb[i * g.n + j] = s;
      }
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= sum;
  }
}

void attention_forward(const AttentionDims& g, const double* q, const double* k, const double* v,
                       const double* mask, double* out, double* probs) {
  std::vector<double> s(g.tk);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* qb = q + b * g.tq * g.d;
    const double* kb = k + b * g.tk * g.d;
    const double* vb = v + b * g.tk * g.dv;
    const double* mb = mask ? mask + b * g.mask_stride : nullptr;
    double* ob = out + b * g.tq * g.dv;
    double* pb = probs + b * g.tq * g.tk;
    for (std::size_t i = 0; i < g.tq; ++i) {
      for (std::size_t j = 0; j < g.tk; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < g.d; ++c) dot += qb[i * g.d + c] * kb[j * g.d + c];
        s[j] = dot * g.scale;
        if (mb) s[j] += mb[i * g.tk + j];
      }
      double mx = s[0];
      for (std::size_t j = 1; j < g.tk; ++j) mx = std::max(mx, s[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < g.tk; ++j) {
        s[j] = std::exp(s[j] - mx);
        sum += s[j];
      }
      double* orow = ob + i * g.dv;
      std::fill(orow, orow + g.dv, 0.0);
      for (std::size_t j = 0; j < g.tk; ++j) {
        const double p = s[j] / sum;
        pb[i * g.tk + j] = p;
        for (std::size_t c = 0; c < g.dv; ++c) orow[c] += p * vb[j * g.dv + c];
      }
    }
  }
}

void attention_backward(const AttentionDims& g, const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq, double* dk, double* dv) {
  std::vector<double> grad_s(g.tk);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* qb = q + b * g.tq * g.d;
    const double* kb = k + b * g.tk * g.d;
    const double* vb = v + b * g.tk * g.dv;
    const double* pb = probs + b * g.tq * g.tk;
    const double* gb = dout + b * g.tq * g.dv;
    double* dqb = dq + b * g.tq * g.d;
    double* dkb = dk + b * g.tk * g.d;
    double* dvb = dv + b * g.tk * g.dv;
    std::fill(dqb, dqb + g.tq * g.d, 0.0);
    std::fill(dkb, dkb + g.tk * g.d, 0.0);
    std::fill(dvb, dvb + g.tk * g.dv, 0.0);
    for (std::size_t i = 0; i < g.tq; ++i) {
      const double* prow = pb + i * g.tk;
      const double* grow = gb + i * g.dv;
      double rowdot = 0.0;
      for (std::size_t j = 0; j < g.tk; ++j) {
        double dp = 0.0;
        for (std::size_t c = 0; c < g.dv; ++c) dp += grow[c] * vb[j * g.dv + c];
        grad_s[j] = dp;
        rowdot += prow[j] * dp;
      }
      for (std::size_t j = 0; j < g.tk; ++j) {
        const double gs = prow[j] * (grad_s[j] - rowdot) * g.scale;
        for (std::size_t c = 0; c < g.d; ++c) {
          dqb[i * g.d + c] += gs * kb[j * g.d + c];
          dkb[j * g.d + c] += gs * qb[i * g.d + c];
        }
        for (std::size_t c = 0; c < g.dv; ++c) dvb[j * g.dv + c] += prow[j] * grow[c];
      }
    }
  }
}

}  // namespace tfz::kernels::serial
