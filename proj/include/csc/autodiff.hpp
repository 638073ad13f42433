// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Explicit reverse-mode tape over the primitives in ops.hpp. Each recorded
// node keeps its value and a closure that maps the node's gradient to the
// gradients of its inputs. There is no operator overloading and no graph
// optimization: callers record exactly the primitives they run.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "csc/ops.hpp"
#include "csc/tensor.hpp"

namespace csc::ad {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

class Tape;

// Returns one gradient per input, in input order. An empty Tensor means "no
// contribution" and is skipped.
using BackwardFn = std::function<std::vector<Tensor>(const Tape&, const Tensor& grad_out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // A value that never receives a gradient. The borrowed overload keeps a
  // pointer, so `value` must outlive the tape.
  Var constant(Tensor value);
  Var borrow(const Tensor& value);
  // A differentiable leaf.
  Var input(Tensor value);
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds `output` with `seed` (shaped like its value) and propagates to
  // every node. Gradients from an earlier call are discarded.
  void backward(Var output, const Tensor& seed);
  // Scalar outputs only: seed 1.
  void backward(Var output);

  bool has_grad(Var v) const { return v.id < grads_.size() && !grads_[v.id].empty(); }
  // Gradient of the last backward output w.r.t. `v`; zeros if no path exists.
  Tensor grad(Var v) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Recorded primitives. Each mirrors the ops:: function of the same name.
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double c);
Var identity(Tape& t, Var x);
Var activate(Tape& t, Activation kind, Var x);
Var causal_softmax(Tape& t, Var x);
Var causal_mean(Tape& t, Var x);
// `gain`/`bias` are constant parameters here; their gradients are not tracked.
Var normalize(Tape& t, Var x, NormKind kind, const Tensor& gain, const Tensor* bias, double eps);
Var embedding(Tape& t, const Tensor& table, std::vector<TokenId> ids);
Var split_heads(Tape& t, Var x, std::size_t n_heads);
Var merge_heads(Tape& t, Var x);
Var rotary(Tape& t, Var x, std::size_t n_heads, double base);
// Scalar node holding `scale * self_entropy(logits, ...)`.
Var self_entropy(Tape& t, Var logits, std::vector<TokenId> targets, std::size_t first_row, std::size_t t_cut,
                 double scale = 1.0);
// Scalar node holding `offset + <weights, x>`.
Var linear_functional(Tape& t, Var x, Tensor weights, double offset);

}  // namespace csc::ad
