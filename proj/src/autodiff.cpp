// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/autodiff.hpp"

#include <string>

#include "csc/error.hpp"

namespace csc::ad {

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::borrow(const Tensor& value) {
  Node n;
  n.borrowed = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (Var in : inputs) {
    if (in.id >= nodes_.size()) throw Error("tape: input recorded after its consumer");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.borrowed ? *n.borrowed : n.owned;
}

void Tape::backward(Var output, const Tensor& seed) {
  if (!value(output).same_shape(seed)) {
    throw DimensionError("tape: seed shape " + shape_string(seed.shape()) + " does not match output " +
                         shape_string(value(output).shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[output.id] = seed;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || grads_[i].empty()) continue;
    std::vector<Tensor> in_grads = n.backward(*this, grads_[i]);
    for (std::size_t k = 0; k < n.inputs.size() && k < in_grads.size(); ++k) {
      const std::size_t j = n.inputs[k].id;
      if (in_grads[k].empty() || !nodes_[j].requires_grad) continue;
      if (grads_[j].empty()) {
        grads_[j] = std::move(in_grads[k]);
      } else {
        grads_[j] = ops::add(grads_[j], in_grads[k]);
      }
    }
  }
}

void Tape::backward(Var output) {
  if (value(output).size() != 1) throw DimensionError("tape: implicit seed needs a scalar output");
  backward(output, Tensor::filled(value(output).shape(), 1.0));
}

Tensor Tape::grad(Var v) const {
  if (has_grad(v)) return grads_[v.id];
  return Tensor(value(v).shape());
}

namespace {

bool needs(const Tape& t, Var v) { return t.requires_grad(v); }

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  return t.record(ops::matmul(t.value(a), t.value(b)), {a, b}, [a, b](const Tape& tp, const Tensor& g) {
    auto grads = ops::matmul_vjp(tp.value(a), tp.value(b), g);
    std::vector<Tensor> out(2);
    if (needs(tp, a)) out[0] = std::move(grads.a);
    if (needs(tp, b)) out[1] = std::move(grads.b);
    return out;
  });
}

Var transpose(Tape& t, Var x) {
  return t.record(ops::transpose(t.value(x)), {x},
                  [](const Tape&, const Tensor& g) { return std::vector<Tensor>{ops::transpose(g)}; });
}

Var add(Tape& t, Var a, Var b) {
  return t.record(ops::add(t.value(a), t.value(b)), {a, b},
                  [](const Tape&, const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Var sub(Tape& t, Var a, Var b) {
  return t.record(ops::sub(t.value(a), t.value(b)), {a, b},
                  [](const Tape&, const Tensor& g) { return std::vector<Tensor>{g, ops::scale(g, -1.0)}; });
}

Var mul(Tape& t, Var a, Var b) {
  return t.record(ops::mul(t.value(a), t.value(b)), {a, b}, [a, b](const Tape& tp, const Tensor& g) {
    auto grads = ops::mul_vjp(tp.value(a), tp.value(b), g);
    return std::vector<Tensor>{std::move(grads.a), std::move(grads.b)};
  });
}

Var scale(Tape& t, Var x, double c) {
  return t.record(ops::scale(t.value(x), c), {x},
                  [c](const Tape&, const Tensor& g) { return std::vector<Tensor>{ops::scale(g, c)}; });
}

Var identity(Tape& t, Var x) {
  return t.record(t.value(x), {x}, [](const Tape&, const Tensor& g) { return std::vector<Tensor>{g}; });
}

Var activate(Tape& t, Activation kind, Var x) {
  return t.record(ops::activate(kind, t.value(x)), {x}, [kind, x](const Tape& tp, const Tensor& g) {
    return std::vector<Tensor>{ops::activate_vjp(kind, tp.value(x), g)};
  });
}

Var causal_softmax(Tape& t, Var x) {
  Var y{t.size()};
  return t.record(ops::causal_softmax(t.value(x)), {x}, [y](const Tape& tp, const Tensor& g) {
    return std::vector<Tensor>{ops::causal_softmax_vjp(tp.value(y), g)};
  });
}

Var causal_mean(Tape& t, Var x) {
  return t.record(ops::causal_mean(t.value(x)), {x},
                  [](const Tape&, const Tensor& g) { return std::vector<Tensor>{ops::causal_mean_vjp(g)}; });
}

Var normalize(Tape& t, Var x, NormKind kind, const Tensor& gain, const Tensor* bias, double eps) {
  std::span<const double> bias_span = bias ? bias->data() : std::span<const double>{};
  return t.record(ops::normalize(t.value(x), kind, gain.data(), bias_span, eps), {x},
                  [x, kind, &gain, bias_span, eps](const Tape& tp, const Tensor& g) {
                    auto grads = ops::normalize_vjp(tp.value(x), kind, gain.data(), bias_span, eps, g);
                    return std::vector<Tensor>{std::move(grads.x)};
                  });
}

Var embedding(Tape& t, const Tensor& table, std::vector<TokenId> ids) {
  // Tables are parameters; no gradient flows out of a gather node.
  return t.constant(ops::embedding(table, ids));
}

Var split_heads(Tape& t, Var x, std::size_t n_heads) {
  return t.record(ops::split_heads(t.value(x), n_heads), {x},
                  [](const Tape&, const Tensor& g) { return std::vector<Tensor>{ops::merge_heads(g)}; });
}

Var merge_heads(Tape& t, Var x) {
  const std::size_t n_heads = t.value(x).dim(0);
  return t.record(ops::merge_heads(t.value(x)), {x}, [n_heads](const Tape&, const Tensor& g) {
    return std::vector<Tensor>{ops::split_heads(g, n_heads)};
  });
}

Var rotary(Tape& t, Var x, std::size_t n_heads, double base) {
  return t.record(ops::rotary(t.value(x), n_heads, base), {x}, [n_heads, base](const Tape&, const Tensor& g) {
    return std::vector<Tensor>{ops::rotary(g, n_heads, base, /*inverse=*/true)};
  });
}

Var self_entropy(Tape& t, Var logits, std::vector<TokenId> targets, std::size_t first_row, std::size_t t_cut,
                 double scale) {
  const double loss = scale * ops::self_entropy(t.value(logits), targets, first_row, t_cut);
  return t.record(Tensor::scalar(loss), {logits},
                  [logits, targets = std::move(targets), first_row, t_cut, scale](const Tape& tp, const Tensor& g) {
                    return std::vector<Tensor>{
                        ops::self_entropy_vjp(tp.value(logits), targets, first_row, t_cut, scale * g[0])};
                  });
}

Var linear_functional(Tape& t, Var x, Tensor weights, double offset) {
  if (weights.size() != t.value(x).size()) throw DimensionError("linear_functional: weight extent mismatch");
  weights = Tensor(t.value(x).shape(), std::vector<double>(weights.data().begin(), weights.data().end()));
  Tensor value = Tensor::scalar(offset + dot(weights, t.value(x)));
  finalize(value, "linear_functional");
  return t.record(std::move(value), {x}, [w = std::move(weights)](const Tape& tp, const Tensor& g) {
    (void)tp;
    return std::vector<Tensor>{ops::scale(w, g[0])};
  });
}

}  // namespace csc::ad
