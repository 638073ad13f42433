// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer with pre-normalized attention and gated FFN
// branches on a residual stream, a tied-embedding readout, and capture of
// every residual read and write needed for edge attribution.
//
// Residual indexing used throughout the library, for L layers:
//   sources       0 = embedding H^(0), 2l-1 = attention l, 2l = FFN l
//   destinations  2l-2 = attention l input, 2l-1 = FFN l input, 2L = readout
// Source s can feed destination d iff s <= d.

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csc/autodiff.hpp"
#include "csc/tensor.hpp"

namespace csc {

enum class PositionalEncoding { none, learned_absolute, rotary };

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 16;
  std::size_t d_ff = 32;
  std::size_t n_heads = 2;
  std::size_t d_query = 8;  // per head
  std::size_t d_attn = 16;  // all heads together
  std::size_t vocab_size = 11;
  std::size_t max_positions = 32;
  NormKind norm = NormKind::layernorm;
  Activation activation = Activation::silu;
  PositionalEncoding positional = PositionalEncoding::learned_absolute;
  Precision precision = Precision::f64;
  double norm_eps = 1e-5;
  double rope_base = 10000.0;

  // Throws ConfigError describing the first violated invariant.
  void validate() const;
  std::size_t head_value_dim() const { return d_attn / n_heads; }
  std::size_t n_sources() const { return 2 * n_layers + 1; }
  std::size_t n_destinations() const { return 2 * n_layers + 1; }
};

struct LayerWeights {
  Tensor attn_norm_gain, attn_norm_bias;  // bias empty under rmsnorm
  Tensor w_q, w_k;                        // [d_model, n_heads * d_query]
  Tensor w_v;                             // [d_model, d_attn]
  Tensor w_o;                             // [d_attn, d_model]
  Tensor ffn_norm_gain, ffn_norm_bias;
  Tensor w_gate, w_up;  // [d_model, d_ff]
  Tensor w_down;        // [d_ff, d_model]
};

struct ModelWeights {
  ModelConfig config;
  Tensor token_embedding;     // [V, d_model]; also the readout projection
  Tensor position_embedding;  // [P_max, d_model] when learned_absolute, else empty
  std::vector<LayerWeights> layers;
  Tensor final_norm_gain, final_norm_bias;

  // Zero-filled weights with the shapes implied by `config`, unit norm gains.
  static ModelWeights zeros(const ModelConfig& config);

  // Every tensor with its canonical name, in a fixed order.
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  // Expected shape for each canonical name.
  static std::vector<std::pair<std::string, Shape>> expected_shapes(const ModelConfig& config);

  // Throws ConfigError or DimensionError when a tensor disagrees with config.
  void validate() const;
};

// Removes `fraction` of source `source`'s output from the input of
// destination `destination` only; every other reader sees the intact stream.
struct EdgeAblation {
  std::size_t source = 0;
  std::size_t destination = 0;
  double fraction = 1.0;
};

// Adds `delta` to the input read by `destination`.
struct BranchInputPatch {
  std::size_t destination = 0;
  Tensor delta;
};

struct ForwardOptions {
  // Norms become identity, attention uses a fixed causal-mean pattern and the
  // FFN drops its gate, so every branch is a fixed linear map.
  bool linear_surrogate = false;
  std::optional<EdgeAblation> ablation;
  std::vector<BranchInputPatch> patches;
};

enum class LossKind {
  self_entropy,
  // First-order expansion of self_entropy around `reference_logits`.
  linearized_self_entropy,
};

struct LossSpec {
  LossKind kind = LossKind::self_entropy;
  std::vector<TokenId> targets;  // generated tokens, one per scored row
  std::size_t first_row = 0;     // logit row that predicts targets[0]
  std::size_t t_cut = 1;
  double scale = 1.0;
  Tensor reference_logits;  // linearized_self_entropy only
};

// Per-sample record of a forward pass: all branch outputs, all residual
// checkpoints, the destination inputs, the logits, and after
// backward_branch_grads() the branch-restricted gradient for every
// destination. Borrows the weights it was built from.
class ExecutionTape {
 public:
  ExecutionTape() = default;

  std::size_t n_layers() const { return n_layers_; }
  std::span<const TokenId> tokens() const { return tokens_; }

  const Tensor& embedding() const { return value(sources_.at(0)); }
  const Tensor& attn_output(std::size_t layer) const { return value(sources_.at(2 * layer - 1)); }  // layer is 1-based
  const Tensor& ffn_output(std::size_t layer) const { return value(sources_.at(2 * layer)); }
  const Tensor& source_output(std::size_t source) const { return value(sources_.at(source)); }
  // H^(k) for k in [0, 2L].
  const Tensor& residual(std::size_t k) const { return value(residuals_.at(k)); }
  const Tensor& readout_input() const { return residual(2 * n_layers_); }
  // What destination d actually read (differs from the residual under ablation or patches).
  const Tensor& destination_input(std::size_t d) const { return value(destination_inputs_.at(d)); }
  const Tensor& logits() const { return value(logits_); }

  bool has_gradients() const { return !grads_.empty(); }
  const Tensor& destination_grad(std::size_t d) const;
  // Loss value recorded by the last backward pass.
  double loss() const { return loss_; }

 private:
  friend struct TapeBuilder;
  friend void backward_branch_grads(const ModelWeights&, ExecutionTape&, const LossSpec&);

  const Tensor& value(ad::Var v) const;

  std::size_t n_layers_ = 0;
  std::vector<TokenId> tokens_;
  std::unique_ptr<ad::Tape> tape_;
  std::vector<ad::Var> sources_;
  std::vector<ad::Var> residuals_;
  std::vector<ad::Var> destination_inputs_;
  ad::Var logits_;
  std::vector<Tensor> grads_;
  double loss_ = 0.0;
};

struct ForwardResult {
  Tensor logits;  // [P, V]
  ExecutionTape tape;
};

// Runs the model on `tokens`. Causal masking is always applied.
// Throws RangeError on out-of-vocabulary ids or sequences longer than P_max.
ForwardResult forward(const ModelWeights& weights, std::span<const TokenId> tokens,
                      const ForwardOptions& options = {});

// One backward pass from the loss described by `loss` fills every
// destination gradient of `tape`.
void backward_branch_grads(const ModelWeights& weights, ExecutionTape& tape, const LossSpec& loss);

// Appends argmax tokens (ties to the lowest id) until `eos` is produced or
// `max_new` tokens exist. Returns the generated tokens only, eos included.
std::vector<TokenId> decode_greedy(const ModelWeights& weights, std::span<const TokenId> prompt,
                                   std::size_t max_new, std::optional<TokenId> eos);

// Forward/backward passes run on the calling thread since the last reset.
struct PassCounters {
  std::size_t forward = 0;
  std::size_t backward = 0;
};
PassCounters& pass_counters();
void reset_pass_counters();

}  // namespace csc
