#pragma once

// Raw compute kernels behind the tape operations.
//
// Two implementations live side by side:
//   serial::   straightforward loops, dense over every element. This is the
//              reference the tests compare against.
//   parallel:: OpenMP-parallel, cache-friendlier loop orders, and attention
//              that skips blocked keys.
//
// Both accumulate every dot product in ascending index order starting from
// +0.0, so for finite inputs they produce bit-identical results. The build
// disables FMA contraction to keep it that way.

#include <cstddef>

namespace tfz::kernels {

/// Scores at or below this are treated as blocked (the -1e30 mask sentinel).
inline constexpr double kBlockedScore = -1e29;
inline constexpr double kMaskSentinel = -1e30;

/// c[b] = op(a[b]) * op(b[b]) for `batch` independent problems.
/// a holds [m,p] (or [p,m] when trans_a), b holds [p,n] (or [n,p] when
/// trans_b), c holds [m,n]. A stride of 0 shares that operand across the batch.
struct GemmDims {
  std::size_t batch = 1;
  std::size_t m = 0, n = 0, p = 0;
  std::size_t stride_a = 0, stride_b = 0;
  bool trans_a = false, trans_b = false;
};

/// Scaled dot-product attention over `batch` heads.
/// q [tq,d], k [tk,d], v [tk,dv], mask [tq,tk] (additive; optional),
/// out [tq,dv], probs [tq,tk]. mask_stride 0 shares one mask across the batch.
struct AttentionDims {
  std::size_t batch = 1;
  std::size_t tq = 0, tk = 0, d = 0, dv = 0;
  std::size_t mask_stride = 0;
  double scale = 1.0;
};

namespace serial {

void gemm(const GemmDims& dims, const double* a, const double* b, double* c);
void softmax_rows(std::size_t rows, std::size_t cols, const double* x, double* y);
void attention_forward(const AttentionDims& dims, const double* q, const double* k, const double* v,
                       const double* mask, double* out, double* probs);
void attention_backward(const AttentionDims& dims, const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq, double* dk, double* dv);

}  // namespace serial

namespace parallel {

void gemm(const GemmDims& dims, const double* a, const double* b, double* c);
void softmax_rows(std::size_t rows, std::size_t cols, const double* x, double* y);
void attention_forward(const AttentionDims& dims, const double* q, const double* k, const double* v,
                       const double* mask, double* out, double* probs);
void attention_backward(const AttentionDims& dims, const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq, double* dk, double* dv);

}  // namespace parallel

/// Number of OpenMP threads kernels may use (1 when built without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace tfz::kernels
