// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/transformer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "csc/error.hpp"
#include "csc/ops.hpp"

namespace csc {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (d_model < 1 || d_ff < 1 || d_query < 1) fail("d_model, d_ff and d_query must be positive");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (d_attn < n_heads || d_attn % n_heads != 0) fail("d_attn must be a positive multiple of n_heads");
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (max_positions < 1) fail("max_positions must be >= 1");
  if (!(norm_eps > 0.0)) fail("norm_eps must be > 0");
  if (positional == PositionalEncoding::rotary) {
    if (d_query % 2 != 0) fail("rotary encoding needs an even d_query");
    if (!(rope_base > 0.0)) fail("rope_base must be > 0");
  }
}

ModelWeights ModelWeights::zeros(const ModelConfig& config) {
  config.validate();
  ModelWeights w;
  w.config = config;
  w.layers.resize(config.n_layers);
  const auto shapes = expected_shapes(config);
  const auto named = w.named_tensors();
  for (std::size_t i = 0; i < shapes.size(); ++i) *named[i].second = Tensor(shapes[i].second);
  auto fill_ones = [](Tensor& t) {
    for (double& v : t.data()) v = 1.0;
  };
  for (LayerWeights& l : w.layers) {
    fill_ones(l.attn_norm_gain);
    fill_ones(l.ffn_norm_gain);
  }
  fill_ones(w.final_norm_gain);
  return w;
}

namespace {

template <typename Weights, typename Out>
void collect_named(Weights& w, Out& out) {
  const ModelConfig& c = w.config;
  out.emplace_back("tok_emb", &w.token_embedding);
  if (c.positional == PositionalEncoding::learned_absolute) out.emplace_back("pos_emb", &w.position_embedding);
  const bool with_bias = c.norm == NormKind::layernorm;
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.emplace_back(p + "attn_norm.gain", &l.attn_norm_gain);
    if (with_bias) out.emplace_back(p + "attn_norm.bias", &l.attn_norm_bias);
    out.emplace_back(p + "attn.w_q", &l.w_q);
    out.emplace_back(p + "attn.w_k", &l.w_k);
    out.emplace_back(p + "attn.w_v", &l.w_v);
    out.emplace_back(p + "attn.w_o", &l.w_o);
    out.emplace_back(p + "ffn_norm.gain", &l.ffn_norm_gain);
    if (with_bias) out.emplace_back(p + "ffn_norm.bias", &l.ffn_norm_bias);
    out.emplace_back(p + "ffn.w_gate", &l.w_gate);
    out.emplace_back(p + "ffn.w_up", &l.w_up);
    out.emplace_back(p + "ffn.w_down", &l.w_down);
  }
  out.emplace_back("final_norm.gain", &w.final_norm_gain);
  if (with_bias) out.emplace_back("final_norm.bias", &w.final_norm_bias);
}

}  // namespace

std::vector<std::pair<std::string, const Tensor*>> ModelWeights::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect_named(*this, out);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelWeights::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect_named(*this, out);
  return out;
}

std::vector<std::pair<std::string, Shape>> ModelWeights::expected_shapes(const ModelConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  const std::size_t dm = c.d_model;
  out.emplace_back("tok_emb", Shape{c.vocab_size, dm});
  if (c.positional == PositionalEncoding::learned_absolute) out.emplace_back("pos_emb", Shape{c.max_positions, dm});
  const bool with_bias = c.norm == NormKind::layernorm;
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    out.emplace_back(p + "attn_norm.gain", Shape{dm});
    if (with_bias) out.emplace_back(p + "attn_norm.bias", Shape{dm});
    out.emplace_back(p + "attn.w_q", Shape{dm, c.n_heads * c.d_query});
    out.emplace_back(p + "attn.w_k", Shape{dm, c.n_heads * c.d_query});
    out.emplace_back(p + "attn.w_v", Shape{dm, c.d_attn});
    out.emplace_back(p + "attn.w_o", Shape{c.d_attn, dm});
    out.emplace_back(p + "ffn_norm.gain", Shape{dm});
    if (with_bias) out.emplace_back(p + "ffn_norm.bias", Shape{dm});
    out.emplace_back(p + "ffn.w_gate", Shape{dm, c.d_ff});
    out.emplace_back(p + "ffn.w_up", Shape{dm, c.d_ff});
    out.emplace_back(p + "ffn.w_down", Shape{c.d_ff, dm});
  }
  out.emplace_back("final_norm.gain", Shape{dm});
  if (with_bias) out.emplace_back("final_norm.bias", Shape{dm});
  return out;
}

void ModelWeights::validate() const {
  config.validate();
  if (layers.size() != config.n_layers) {
    throw ConfigError("model weights: " + std::to_string(layers.size()) + " layers, config says " +
                      std::to_string(config.n_layers));
  }
  const auto expected = expected_shapes(config);
  const auto actual = named_tensors();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (actual[i].second->shape() != expected[i].second) {
      throw DimensionError("model weights: tensor '" + expected[i].first + "' has shape " +
                           shape_string(actual[i].second->shape()) + ", expected " +
                           shape_string(expected[i].second));
    }
  }
}

const Tensor& ExecutionTape::value(ad::Var v) const {
  if (!tape_) throw Error("execution tape: not recorded");
  return tape_->value(v);
}

const Tensor& ExecutionTape::destination_grad(std::size_t d) const {
  if (grads_.empty()) throw Error("execution tape: gradients requested before backward_branch_grads");
  return grads_.at(d);
}

namespace {
thread_local PassCounters t_counters;
}  // namespace

PassCounters& pass_counters() { return t_counters; }
void reset_pass_counters() { t_counters = {}; }

struct TapeBuilder {
  const ModelWeights& w;
  const ForwardOptions& opt;
  ExecutionTape et;
  ad::Tape* tape = nullptr;

  ad::Var param(const Tensor& t) { return tape->borrow(t); }

  // The read performed by destination d: residual, minus any ablated edge,
  // plus any patch, followed by an identity node whose gradient is g_d.
  ad::Var destination_read(std::size_t d, ad::Var residual) {
    ad::Var v = residual;
    if (opt.ablation && opt.ablation->destination == d) {
      const EdgeAblation& a = *opt.ablation;
      if (a.source > d) {
        throw RangeError("ablation: source " + std::to_string(a.source) + " does not precede destination " +
                         std::to_string(d));
      }
      v = ad::sub(*tape, v, ad::scale(*tape, et.sources_.at(a.source), a.fraction));
    }
    for (const BranchInputPatch& p : opt.patches) {
      if (p.destination == d) v = ad::add(*tape, v, tape->constant(p.delta));
    }
    ad::Var in = ad::identity(*tape, v);
    et.destination_inputs_.push_back(in);
    return in;
  }

  ad::Var norm(ad::Var x, const Tensor& gain, const Tensor& bias) {
    if (opt.linear_surrogate) return x;
    const Tensor* b = w.config.norm == NormKind::layernorm ? &bias : nullptr;
    return ad::normalize(*tape, x, w.config.norm, gain, b, w.config.norm_eps);
  }

  ad::Var attention(ad::Var x, const LayerWeights& l) {
    const ModelConfig& c = w.config;
    ad::Var v = ad::split_heads(*tape, ad::matmul(*tape, x, param(l.w_v)), c.n_heads);
    ad::Var ctx;
    if (opt.linear_surrogate) {
      ctx = ad::causal_mean(*tape, v);
    } else {
      ad::Var q = ad::matmul(*tape, x, param(l.w_q));
      ad::Var k = ad::matmul(*tape, x, param(l.w_k));
      if (c.positional == PositionalEncoding::rotary) {
        q = ad::rotary(*tape, q, c.n_heads, c.rope_base);
        k = ad::rotary(*tape, k, c.n_heads, c.rope_base);
      }
      ad::Var qh = ad::split_heads(*tape, q, c.n_heads);
      ad::Var kh = ad::split_heads(*tape, k, c.n_heads);
      ad::Var scores = ad::scale(*tape, ad::matmul(*tape, qh, ad::transpose(*tape, kh)),
                                 1.0 / std::sqrt(static_cast<double>(c.d_query)));
      ctx = ad::matmul(*tape, ad::causal_softmax(*tape, scores), v);
    }
    return ad::matmul(*tape, ad::merge_heads(*tape, ctx), param(l.w_o));
  }

  ad::Var ffn(ad::Var x, const LayerWeights& l) {
    ad::Var up = ad::matmul(*tape, x, param(l.w_up));
    ad::Var hidden = up;
    if (!opt.linear_surrogate) {
      ad::Var gate = ad::activate(*tape, w.config.activation, ad::matmul(*tape, x, param(l.w_gate)));
      hidden = ad::mul(*tape, gate, up);
    }
    return ad::matmul(*tape, hidden, param(l.w_down));
  }

  ForwardResult run(std::span<const TokenId> tokens) {
    const ModelConfig& c = w.config;
    const std::size_t n_pos = tokens.size();
    et.n_layers_ = c.n_layers;
    et.tokens_.assign(tokens.begin(), tokens.end());
    et.tape_ = std::make_unique<ad::Tape>();
    tape = et.tape_.get();

    Tensor h0 = ops::embedding(w.token_embedding, tokens);
    if (c.positional == PositionalEncoding::learned_absolute) {
      std::vector<TokenId> positions(n_pos);
      std::iota(positions.begin(), positions.end(), TokenId{0});
      h0 = ops::add(h0, ops::embedding(w.position_embedding, positions));
    }
    ad::Var h = tape->input(std::move(h0));
    et.sources_.push_back(h);
    et.residuals_.push_back(h);

    for (std::size_t li = 0; li < c.n_layers; ++li) {
      const LayerWeights& l = w.layers[li];
      ad::Var attn_in = destination_read(2 * li, h);
      ad::Var o_attn = attention(norm(attn_in, l.attn_norm_gain, l.attn_norm_bias), l);
      et.sources_.push_back(o_attn);
      h = ad::add(*tape, h, o_attn);
      et.residuals_.push_back(h);

      ad::Var ffn_in = destination_read(2 * li + 1, h);
      ad::Var o_ffn = ffn(norm(ffn_in, l.ffn_norm_gain, l.ffn_norm_bias), l);
      et.sources_.push_back(o_ffn);
      h = ad::add(*tape, h, o_ffn);
      et.residuals_.push_back(h);
    }

    ad::Var readout_in = destination_read(2 * c.n_layers, h);
    ad::Var x = norm(readout_in, w.final_norm_gain, w.final_norm_bias);
    ad::Var unembed = tape->constant(ops::transpose(w.token_embedding));
    et.logits_ = ad::matmul(*tape, x, unembed);

    Tensor logits = tape->value(et.logits_);
    return ForwardResult{std::move(logits), std::move(et)};
  }
};

ForwardResult forward(const ModelWeights& weights, std::span<const TokenId> tokens, const ForwardOptions& options) {
  const ModelConfig& c = weights.config;
  c.validate();
  if (weights.layers.size() != c.n_layers) throw ConfigError("forward: weights do not match config layer count");
  if (tokens.empty()) throw RangeError("forward: empty token sequence");
  if (tokens.size() > c.max_positions) {
    throw RangeError("forward: sequence length " + std::to_string(tokens.size()) + " exceeds max_positions " +
                     std::to_string(c.max_positions));
  }
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (tokens[p] >= c.vocab_size) {
      throw RangeError("forward: token id " + std::to_string(tokens[p]) + " at position " + std::to_string(p) +
                       " out of range for vocabulary of " + std::to_string(c.vocab_size));
    }
  }
  const std::size_t n_dest = c.n_destinations();
  if (options.ablation && options.ablation->destination >= n_dest) {
    throw RangeError("forward: ablation destination out of range");
  }
  for (const BranchInputPatch& p : options.patches) {
    if (p.destination >= n_dest) throw RangeError("forward: patch destination out of range");
    if (p.delta.shape() != Shape{tokens.size(), c.d_model}) {
      throw DimensionError("forward: patch delta must be [P, d_model], got " + shape_string(p.delta.shape()));
    }
  }
  ++t_counters.forward;
  TapeBuilder builder{weights, options, {}, nullptr};
  return builder.run(tokens);
}

void backward_branch_grads(const ModelWeights& weights, ExecutionTape& tape, const LossSpec& loss) {
  if (!tape.tape_ || !tape.logits_.valid() || tape.destination_inputs_.size() != 2 * tape.n_layers_ + 1) {
    throw Error("backward_branch_grads: tape is missing forward records");
  }
  if (weights.config.n_layers != tape.n_layers_) {
    throw ConfigError("backward_branch_grads: weights do not match the recorded model");
  }
  ++t_counters.backward;
  ad::Tape& t = *tape.tape_;
  ad::Var out;
  if (loss.kind == LossKind::self_entropy) {
    out = ad::self_entropy(t, tape.logits_, loss.targets, loss.first_row, loss.t_cut, loss.scale);
  } else {
    const Tensor& ref = loss.reference_logits;
    if (!ref.same_shape(t.value(tape.logits_))) {
      throw DimensionError("backward_branch_grads: reference logits must match the recorded logits");
    }
    Tensor slope = ops::self_entropy_vjp(ref, loss.targets, loss.first_row, loss.t_cut, loss.scale);
    const double at_ref = loss.scale * ops::self_entropy(ref, loss.targets, loss.first_row, loss.t_cut);
    const double offset = at_ref - dot(slope, ref);
    out = ad::linear_functional(t, tape.logits_, std::move(slope), offset);
  }
  t.backward(out);
  tape.loss_ = t.value(out)[0];
  tape.grads_.clear();
  for (ad::Var in : tape.destination_inputs_) tape.grads_.push_back(t.grad(in));
}

std::vector<TokenId> decode_greedy(const ModelWeights& weights, std::span<const TokenId> prompt, std::size_t max_new,
                                   std::optional<TokenId> eos) {
  if (prompt.empty()) throw RangeError("decode_greedy: empty prompt");
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  std::vector<TokenId> generated;
  while (generated.size() < max_new) {
    const Tensor logits = forward(weights, seq).logits;
    const std::size_t v = logits.dim(1);
    const std::size_t last = logits.dim(0) - 1;
    TokenId best = 0;
    for (std::size_t j = 1; j < v; ++j) {
      if (logits.at(last, j) > logits.at(last, best)) best = static_cast<TokenId>(j);
    }
    generated.push_back(best);
    seq.push_back(best);
    if (eos && best == *eos) break;
  }
  return generated;
}

}  // namespace csc
