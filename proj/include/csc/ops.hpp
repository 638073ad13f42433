// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward primitives and their vector-Jacobian products. Each `*_vjp` takes
// the upstream gradient `g` (shaped like the primitive's output) and returns
// the gradient for each differentiable input. All functions are pure; sums run
// sequentially along the last axis so results are bit-reproducible.

#pragma once

#include <span>

#include "csc/tensor.hpp"

namespace csc {

enum class NormKind { layernorm, rmsnorm };
enum class Activation { silu, gelu };

namespace ops {

// [..., m, k] x [..., k, n] -> [..., m, n]. `b` may be rank 2, in which case
// it is shared by every leading index of `a`.
Tensor matmul(const Tensor& a, const Tensor& b);
struct MatmulGrads {
  Tensor a;
  Tensor b;
};
MatmulGrads matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& g);

// Swaps the last two axes. Its own VJP.
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
struct MulGrads {
  Tensor a;
  Tensor b;
};
MulGrads mul_vjp(const Tensor& a, const Tensor& b, const Tensor& g);

Tensor activate(Activation kind, const Tensor& x);
Tensor activate_vjp(Activation kind, const Tensor& x, const Tensor& g);

Tensor softmax(const Tensor& x, int axis = -1);
// Takes the softmax output `y`, not its input.
Tensor softmax_vjp(const Tensor& y, const Tensor& g, int axis = -1);

// Softmax over the last axis of [..., P, P] with entries j > i excluded
// (they come out as exactly 0).
Tensor causal_softmax(const Tensor& x);
Tensor causal_softmax_vjp(const Tensor& y, const Tensor& g);

// Row i of [..., P, d] becomes the mean of rows 0..i. Linear; used by the
// fixed-pattern attention of the linear surrogate.
Tensor causal_mean(const Tensor& x);
Tensor causal_mean_vjp(const Tensor& g);

// Normalizes over the last axis. `gain` has the last-axis extent; `bias` is
// empty for rmsnorm (and may be empty for layernorm, meaning zero).
Tensor normalize(const Tensor& x, NormKind kind, std::span<const double> gain, std::span<const double> bias,
                 double eps);
struct NormalizeGrads {
  Tensor x;
  Tensor gain;
  Tensor bias;
};
NormalizeGrads normalize_vjp(const Tensor& x, NormKind kind, std::span<const double> gain,
                             std::span<const double> bias, double eps, const Tensor& g);

// Rows of `table` [n, d] selected by `ids` -> [ids.size(), d].
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);
Tensor embedding_vjp(const Shape& table_shape, std::span<const TokenId> ids, const Tensor& g);

// [P, H*d] <-> [H, P, d].
Tensor split_heads(const Tensor& x, std::size_t n_heads);
Tensor merge_heads(const Tensor& x);

// Rotary position encoding on [P, H*d]: each head's feature pairs (2i, 2i+1)
// at position p are rotated by p * base^(-2i/d). `inverse` rotates backwards,
// which is also the VJP.
Tensor rotary(const Tensor& x, std::size_t n_heads, double base, bool inverse = false);

// Mean over rows [first_row, first_row + t_cut) of -log softmax(row)[target].
double self_entropy(const Tensor& logits, std::span<const TokenId> targets, std::size_t first_row,
                    std::size_t t_cut);
Tensor self_entropy_vjp(const Tensor& logits, std::span<const TokenId> targets, std::size_t first_row,
                        std::size_t t_cut, double g = 1.0);
// self_entropy(after) - self_entropy(before), evaluated from the logit
// differences so small changes do not cancel against the O(1) loss.
double self_entropy_change(const Tensor& before, const Tensor& after, std::span<const TokenId> targets,
                           std::size_t first_row, std::size_t t_cut);

}  // namespace ops
}  // namespace csc
