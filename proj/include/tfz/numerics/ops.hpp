#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tfz/numerics/tape.hpp"

namespace tfz {

enum class KernelBackend { Serial, Parallel };

/// Process-wide kernel selection. Parallel is the default; tests switch to
/// Serial to compare whole forward passes against the reference loops.
void set_kernel_backend(KernelBackend backend);
KernelBackend kernel_backend();

// Elementwise / structural ---------------------------------------------------

/// a + b where b has a's shape or a suffix of it (broadcast over a's prefix).
Var add(Var a, Var b);
/// Elementwise product of equally shaped operands.
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var sum(Var x);
/// Mean along `axis`, which is removed from the shape.
Var mean_over_axis(Var x, int axis);
Var reshape(Var x, Shape shape);
/// Output axis i is input axis perm[i].
Var permute(Var x, std::vector<std::size_t> perm);
Var concat_axis(std::span<const Var> xs, int axis);
Var slice_axis(Var x, int axis, std::size_t start, std::size_t length);
/// Repeats x under a new leading prefix: [prefix..., x.shape...].
Var expand_prefix(Var x, const Shape& prefix);

// Dense algebra ----------------------------------------------------------------

/// [.., m, p] x [.., p, n]. Batch prefixes must be equal, or one operand is
/// rank 2 and shared across the other's batch.
Var matmul(Var a, Var b);
/// x [.., in] times w [in, out], plus bias [out] when `bias` is valid.
Var linear(Var x, Var w, Var bias = {});
Var softmax_lastdim(Var x);
/// y = x / sqrt(mean(x^2) + eps) * gain over the last axis.
Var rms_norm(Var x, Var gain, double eps);
/// tanh-approximation GELU with constant sqrt(2/pi) = 0.7978845608...
Var gelu(Var x);

/// softmax(q k^T / sqrt(d) + mask) v over the last two axes.
/// `mask` is [tq, tk] (shared) or carries the same batch prefix as q; entries
/// are 0 or kernels::kMaskSentinel. Throws AllMaskedRow when a query row has
/// no allowed key. When `weights_out` is set it receives the attention weights.
Var attention(Var q, Var k, Var v, const Tensor* mask = nullptr, Tensor* weights_out = nullptr);

/// Rotary position embedding on x [.., S, d]: dims (2i, 2i+1) at position s
/// rotate by s * base^(-2i/d).
Var rope(Var x, double base);

/// table [V, h] gathered at ids laid out as `ids_shape`; result [ids_shape.., h].
Var embedding_lookup(Var table, std::span<const std::size_t> ids, const Shape& ids_shape);

/// Mean over rows of -log softmax(logits)[target]; logits [B, C].
Var cross_entropy(Var logits, std::span<const std::size_t> targets);

}  // namespace tfz
