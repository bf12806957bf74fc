#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tfz/numerics/kernels.hpp"

namespace tfz::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace parallel {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

}  // namespace

void gemm(const GemmDims& g, const double* a, const double* b, double* c) {
  // Row-wise i-k-j needs b as [p,n]; transpose once up front when it is not.
  std::vector<double> bt;
  std::size_t stride_b = g.stride_b;
  const double* bsrc = b;
  if (g.trans_b) {
    const std::size_t copies = g.stride_b == 0 ? 1 : g.batch;
    bt.resize(copies * g.p * g.n);
    for (std::size_t bi = 0; bi < copies; ++bi) {
      const double* src = b + bi * g.stride_b;
      double* dst = bt.data() + bi * g.p * g.n;
      for (std::size_t j = 0; j < g.n; ++j) {
        for (std::size_t k = 0; k < g.p; ++k) dst[k * g.n + j] = src[j * g.p + k];
      }
    }
    bsrc = bt.data();
    stride_b = g.stride_b == 0 ? 0 : g.p * g.n;
  }

  const std::size_t rows = g.batch * g.m;
  const bool go_parallel = rows * g.n * g.p >= kParallelWork && rows > 1;
  const long long nrows = static_cast<long long>(rows);
#pragma omp parallel for schedule(static) if (go_parallel)
  for (long long r = 0; r < nrows; ++r) {
    const std::size_t bi = static_cast<std::size_t>(r) / g.m;
    const std::size_t i = static_cast<std::size_t>(r) % g.m;
    const double* ab = a + bi * g.stride_a;
    const double* bb = bsrc + bi * stride_b;
    double* crow = c + (bi * g.m + i) * g.n;
    std::fill(crow, crow + g.n, 0.0);
    for (std::size_t k = 0; k < g.p; ++k) {
      const double x = g.trans_a ? ab[k * g.m + i] : ab[i * g.p + k];
      const double* brow = bb + k * g.n;
      for (std::size_t j = 0; j < g.n; ++j) crow[j] += x * brow[j];
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, const double* x, double* y) {
  const long long nrows = static_cast<long long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (long long rr = 0; rr < nrows; ++rr) {
    const std::size_t r = static_cast<std::size_t>(rr);
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
  const long long nb = static_cast<long long>(g.batch);
  const bool go_parallel = g.batch > 1 && g.batch * g.tq * g.tk * (g.d + g.dv) >= kParallelWork;
#pragma omp parallel if (go_parallel)
  {
    std::vector<double> s(g.tk);
    std::vector<std::size_t> allowed(g.tk);
#pragma omp for schedule(static)
    for (long long bb = 0; bb < nb; ++bb) {
      const std::size_t b = static_cast<std::size_t>(bb);
      const double* qb = q + b * g.tq * g.d;
      const double* kb = k + b * g.tk * g.d;
      const double* vb = v + b * g.tk * g.dv;
      const double* mb = mask ? mask + b * g.mask_stride : nullptr;
      double* ob = out + b * g.tq * g.dv;
      double* pb = probs + b * g.tq * g.tk;
      for (std::size_t i = 0; i < g.tq; ++i) {
        std::size_t n_allowed = 0;
        for (std::size_t j = 0; j < g.tk; ++j) {
          if (!mb || mb[i * g.tk + j] > kBlockedScore) allowed[n_allowed++] = j;
        }
        double* prow = pb + i * g.tk;
        std::fill(prow, prow + g.tk, 0.0);
        double* orow = ob + i * g.dv;
        std::fill(orow, orow + g.dv, 0.0);
        if (n_allowed == 0) continue;

        const double* qi = qb + i * g.d;
        double mx = -HUGE_VAL;
        for (std::size_t a = 0; a < n_allowed; ++a) {
          const std::size_t j = allowed[a];
          const double* kj = kb + j * g.d;
          double dot = 0.0;
          for (std::size_t c = 0; c < g.d; ++c) dot += qi[c] * kj[c];
          double sj = dot * g.scale;
          if (mb) sj += mb[i * g.tk + j];
          s[a] = sj;
          mx = std::max(mx, sj);
        }
        double sum = 0.0;
        for (std::size_t a = 0; a < n_allowed; ++a) {
          s[a] = std::exp(s[a] - mx);
          sum += s[a];
        }
        for (std::size_t a = 0; a < n_allowed; ++a) {
          const std::size_t j = allowed[a];
          const double p = s[a] / sum;
          prow[j] = p;
          const double* vj = vb + j * g.dv;
          for (std::size_t c = 0; c < g.dv; ++c) orow[c] += p * vj[c];
        }
      }
    }
  }
}

void attention_backward(const AttentionDims& g, const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq, double* dk, double* dv) {
  const long long nb = static_cast<long long>(g.batch);
  const bool go_parallel = g.batch > 1 && g.batch * g.tq * g.tk * (g.d + g.dv) >= kParallelWork;
#pragma omp parallel if (go_parallel)
  {
    std::vector<double> grad_s(g.tk);
    std::vector<std::size_t> live(g.tk);
#pragma omp for schedule(static)
    for (long long bb = 0; bb < nb; ++bb) {
      const std::size_t b = static_cast<std::size_t>(bb);
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
        const double* qi = qb + i * g.d;
        double* dqi = dqb + i * g.d;
        // Zero-probability keys contribute exact zeros; skipping them keeps the bits.
        std::size_t n_live = 0;
        for (std::size_t j = 0; j < g.tk; ++j) {
          if (prow[j] != 0.0) live[n_live++] = j;
        }
        double rowdot = 0.0;
        for (std::size_t a = 0; a < n_live; ++a) {
          const std::size_t j = live[a];
          const double* vj = vb + j * g.dv;
          double dp = 0.0;
          for (std::size_t c = 0; c < g.dv; ++c) dp += grow[c] * vj[c];
          grad_s[a] = dp;
          rowdot += prow[j] * dp;
        }
        for (std::size_t a = 0; a < n_live; ++a) {
          const std::size_t j = live[a];
          const double gs = prow[j] * (grad_s[a] - rowdot) * g.scale;
          const double* kj = kb + j * g.d;
          double* dkj = dkb + j * g.d;
          for (std::size_t c = 0; c < g.d; ++c) {
            dqi[c] += gs * kj[c];
            dkj[c] += gs * qi[c];
          }
          double* dvj = dvb + j * g.dv;
          for (std::size_t c = 0; c < g.dv; ++c) dvj[c] += prow[j] * grow[c];
        }
      }
    }
  }
}

}  // namespace parallel
}  // namespace tfz::kernels
