// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <thread>

#include "csc/error.hpp"
#include "csc/ops.hpp"
#include "csc/transformer.hpp"
#include "support.hpp"

namespace csc {
namespace {

using test::random_tokens;
using test::small_config;

double branch_loss(const ModelWeights& w, const std::vector<TokenId>& tokens, const LossSpec& loss,
                   std::vector<BranchInputPatch> patches = {}) {
  ForwardOptions opt;
  opt.patches = std::move(patches);
  const Tensor logits = forward(w, tokens, opt).logits;
  return loss.scale * ops::self_entropy(logits, loss.targets, loss.first_row, loss.t_cut);
}

LossSpec tail_loss(const std::vector<TokenId>& tokens, std::size_t prompt_len) {
  LossSpec loss;
  loss.first_row = prompt_len - 1;
  loss.t_cut = tokens.size() - prompt_len;
  loss.targets.assign(tokens.begin() + static_cast<long>(prompt_len), tokens.end());
  return loss;
}

TEST(Config, RejectsBrokenInvariants) {
  ModelConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.n_layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.d_attn = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.vocab_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.max_positions = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Weights, ShapesFollowConfig) {
  const ModelWeights w = ModelWeights::zeros(small_config());
  EXPECT_EQ(w.token_embedding.shape(), (Shape{11, 16}));
  EXPECT_EQ(w.layers[1].w_q.shape(), (Shape{16, 16}));
  EXPECT_EQ(w.layers[0].w_down.shape(), (Shape{32, 16}));
  EXPECT_EQ(w.named_tensors().size(), ModelWeights::expected_shapes(w.config).size());
  ModelWeights bad = w;
  bad.layers[0].w_up = Tensor({16, 31});
  EXPECT_THROW(bad.validate(), DimensionError);
}

TEST(Forward, MatchesReferenceEvaluator) {
  for (int seed = 0; seed < 5; ++seed) {
    const ModelWeights w = io::random_model(small_config(), 42 + seed);
    io::Rng rng(seed);
    const std::vector<TokenId> tokens = random_tokens(5, 11, rng);
    EXPECT_LT(max_abs_diff(forward(w, tokens).logits, test::reference_logits(w, tokens)), 1e-6);
  }
}

TEST(Forward, MatchesReferenceAcrossArchitectureOptions) {
  for (NormKind norm : {NormKind::layernorm, NormKind::rmsnorm}) {
    for (Activation act : {Activation::silu, Activation::gelu}) {
      for (PositionalEncoding pos :
           {PositionalEncoding::none, PositionalEncoding::learned_absolute, PositionalEncoding::rotary}) {
        ModelConfig c = small_config(3);
        c.norm = norm;
        c.activation = act;
        c.positional = pos;
        const ModelWeights w = io::random_model(c, 9);
        io::Rng rng(10);
        const std::vector<TokenId> tokens = random_tokens(7, 11, rng);
        EXPECT_LT(max_abs_diff(forward(w, tokens).logits, test::reference_logits(w, tokens)), 1e-6);
      }
    }
  }
}

TEST(Forward, ZeroBranchesLeaveEmbeddingOnStream) {
  ModelConfig c = small_config();
  ModelWeights w = ModelWeights::zeros(c);
  io::Rng rng(3);
  w.token_embedding = test::random_tensor({11, 16}, rng);
  w.position_embedding = test::random_tensor({32, 16}, rng);
  const std::vector<TokenId> tokens = random_tokens(5, 11, rng);
  const ForwardResult r = forward(w, tokens);
  for (std::size_t l = 1; l <= 2; ++l) {
    for (double v : r.tape.attn_output(l).data()) EXPECT_EQ(v, 0.0);
    for (double v : r.tape.ffn_output(l).data()) EXPECT_EQ(v, 0.0);
  }
  EXPECT_TRUE(bit_equal(r.tape.readout_input(), r.tape.embedding()));
  const Tensor expected = ops::matmul(
      ops::normalize(r.tape.embedding(), c.norm, w.final_norm_gain.data(), w.final_norm_bias.data(), c.norm_eps),
      ops::transpose(w.token_embedding));
  EXPECT_TRUE(bit_equal(r.logits, expected));
}

TEST(Forward, ResidualIdentitiesHold) {
  const ModelWeights w = io::random_model(small_config(3), 5);
  io::Rng rng(5);
  const ForwardResult r = forward(w, random_tokens(6, 11, rng));
  const ExecutionTape& t = r.tape;
  Tensor sum = t.embedding();
  for (std::size_t l = 1; l <= 3; ++l) {
    EXPECT_LT(max_abs_diff(t.residual(2 * l - 1), ops::add(t.residual(2 * l - 2), t.attn_output(l))), 1e-10);
    EXPECT_LT(max_abs_diff(t.residual(2 * l), ops::add(t.residual(2 * l - 1), t.ffn_output(l))), 1e-10);
    sum = ops::add(ops::add(sum, t.attn_output(l)), t.ffn_output(l));
  }
  EXPECT_LT(max_abs_diff(sum, t.readout_input()), 1e-10);
  for (std::size_t d = 0; d <= 6; ++d) EXPECT_TRUE(bit_equal(t.destination_input(d), t.residual(d)));
  for (std::size_t s = 0; s <= 6; ++s) EXPECT_EQ(t.source_output(s).shape(), (Shape{6, 16}));
}

TEST(Forward, IsCausal) {
  const ModelWeights w = io::random_model(small_config(), 6);
  for (PositionalEncoding pos : {PositionalEncoding::learned_absolute, PositionalEncoding::rotary}) {
    ModelWeights v = w;
    if (pos == PositionalEncoding::rotary) {
      v = io::random_model([] {
        ModelConfig c = small_config();
        c.positional = PositionalEncoding::rotary;
        return c;
      }(), 6);
    }
    io::Rng rng(6);
    const std::vector<TokenId> tokens = random_tokens(8, 11, rng);
    const Tensor base = forward(v, tokens).logits;
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
      std::vector<TokenId> changed = tokens;
      for (std::size_t p = t + 1; p < changed.size(); ++p) changed[p] = (changed[p] + 1 + p) % 11;
      const Tensor other = forward(v, changed).logits;
      for (std::size_t row = 0; row <= t; ++row) {
        for (std::size_t j = 0; j < 11; ++j) EXPECT_EQ(other.at(row, j), base.at(row, j));
      }
    }
  }
}

TEST(Forward, RejectsBadInput) {
  const ModelWeights w = io::random_model(small_config(), 1);
  EXPECT_THROW(forward(w, std::vector<TokenId>{}), RangeError);
  EXPECT_THROW(forward(w, std::vector<TokenId>{1, 11}), RangeError);
  EXPECT_THROW(forward(w, std::vector<TokenId>(33, 1)), RangeError);
  EXPECT_NO_THROW(forward(w, std::vector<TokenId>(32, 1)));
  ForwardOptions opt;
  opt.patches.push_back({0, Tensor({2, 15})});
  EXPECT_THROW(forward(w, std::vector<TokenId>{1, 2}, opt), DimensionError);
  ForwardOptions ablate;
  ablate.ablation = EdgeAblation{3, 1, 1.0};
  EXPECT_THROW(forward(w, std::vector<TokenId>{1, 2}, ablate), RangeError);
}

TEST(Forward, DeterministicAndThreadSafe) {
  const ModelWeights w = io::random_model(small_config(), 7);
  io::Rng rng(7);
  std::vector<std::vector<TokenId>> inputs;
  for (int i = 0; i < 8; ++i) inputs.push_back(random_tokens(6, 11, rng));
  std::vector<Tensor> serial;
  for (const auto& in : inputs) serial.push_back(forward(w, in).logits);
  std::vector<Tensor> parallel(inputs.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    pool.emplace_back([&, i] { parallel[i] = forward(w, inputs[i]).logits; });
  }
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < inputs.size(); ++i) EXPECT_TRUE(bit_equal(serial[i], parallel[i]));
}

TEST(Forward, AblationChangesOnlyTheTargetRead) {
  const ModelWeights w = io::random_model(small_config(), 8);
  io::Rng rng(8);
  const std::vector<TokenId> tokens = random_tokens(5, 11, rng);
  ForwardOptions opt;
  opt.ablation = EdgeAblation{1, 3, 0.5};
  const ForwardResult r = forward(w, tokens, opt);
  const Tensor expected = ops::sub(r.tape.residual(3), ops::scale(r.tape.source_output(1), 0.5));
  EXPECT_TRUE(bit_equal(r.tape.destination_input(3), expected));
  EXPECT_TRUE(bit_equal(r.tape.destination_input(2), r.tape.residual(2)));
}

// Builds weights whose final norm ignores its input, so logits are constant.
ModelWeights constant_logit_model(TokenId winner) {
  ModelConfig c = small_config();
  ModelWeights w = ModelWeights::zeros(c);
  for (double& g : w.final_norm_gain.data()) g = 0.0;
  w.final_norm_bias[0] = 1.0;
  for (std::size_t t = 0; t < c.vocab_size; ++t) w.token_embedding.at(t, 0) = t == winner ? 2.0 : 1.0;
  return w;
}

TEST(Decode, ConstantArgmaxRepeats) {
  const ModelWeights w = constant_logit_model(3);
  const auto out = decode_greedy(w, std::vector<TokenId>{1, 2}, 6, std::nullopt);
  EXPECT_EQ(out, std::vector<TokenId>(6, 3));
}

TEST(Decode, StopsAtEos) {
  const ModelWeights w = constant_logit_model(3);
  EXPECT_EQ(decode_greedy(w, std::vector<TokenId>{1}, 6, TokenId{3}), std::vector<TokenId>{3});
  EXPECT_TRUE(decode_greedy(w, std::vector<TokenId>{1}, 0, TokenId{3}).empty());
  EXPECT_THROW(decode_greedy(w, std::vector<TokenId>{}, 2, std::nullopt), RangeError);
}

TEST(Decode, TiesGoToLowestId) {
  ModelWeights w = ModelWeights::zeros(small_config());
  EXPECT_EQ(decode_greedy(w, std::vector<TokenId>{4}, 3, std::nullopt), std::vector<TokenId>(3, 0));
}

TEST(Decode, SeededModelGolden) {
  const ModelWeights w = io::random_model(small_config(), 42);
  const auto out = decode_greedy(w, std::vector<TokenId>{1, 5, 9, 2}, 12, std::nullopt);
  const std::vector<TokenId> golden{2, 7, 7, 7, 7, 7, 7, 7, 7, 7, 7, 7};
  EXPECT_EQ(out, golden);
}

TEST(Backward, BranchGradientsMatchFiniteDifferences) {
  for (ModelConfig c : {small_config(), small_config(3)}) {
    for (int seed = 0; seed < 3; ++seed) {
      const ModelWeights w = io::random_model(c, 200 + seed);
      io::Rng rng(200 + seed);
      const std::vector<TokenId> tokens = random_tokens(5, 11, rng);
      const LossSpec loss = tail_loss(tokens, 2);
      ForwardResult r = forward(w, tokens);
      backward_branch_grads(w, r.tape, loss);
      ASSERT_TRUE(r.tape.has_gradients());
      EXPECT_NEAR(r.tape.loss(), branch_loss(w, tokens, loss), 1e-14);
      for (std::size_t d = 0; d < c.n_destinations(); ++d) {
        const Tensor zero({tokens.size(), c.d_model});
        auto f = [&](const Tensor& delta) { return Tensor::scalar(branch_loss(w, tokens, loss, {{d, delta}})); };
        const Tensor numeric = test::numeric_gradient(f, zero, Tensor::scalar(1.0));
        EXPECT_LT(test::relative_error(r.tape.destination_grad(d).data(), numeric.data()), 1e-5) << "destination " << d;
      }
    }
  }
}

TEST(Backward, ZeroBranchModel) {
  ModelWeights w = ModelWeights::zeros(small_config());
  io::Rng rng(11);
  w.token_embedding = test::random_tensor({11, 16}, rng);
  const std::vector<TokenId> tokens = random_tokens(5, 11, rng);
  ForwardResult r = forward(w, tokens);
  backward_branch_grads(w, r.tape, tail_loss(tokens, 2));
  for (std::size_t d = 0; d < 4; ++d) {
    for (double v : r.tape.destination_grad(d).data()) EXPECT_EQ(v, 0.0);
  }
  double norm = 0.0;
  for (double v : r.tape.destination_grad(4).data()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(Backward, ScalesWithTheLoss) {
  const ModelWeights w = io::random_model(small_config(), 12);
  io::Rng rng(12);
  const std::vector<TokenId> tokens = random_tokens(6, 11, rng);
  LossSpec loss = tail_loss(tokens, 3);
  ForwardResult a = forward(w, tokens);
  backward_branch_grads(w, a.tape, loss);
  for (double c : {2.0, 3.0, -0.5}) {
    loss.scale = c;
    ForwardResult b = forward(w, tokens);
    backward_branch_grads(w, b.tape, loss);
    for (std::size_t d = 0; d < 5; ++d) {
      const Tensor expected = ops::scale(a.tape.destination_grad(d), c);
      if (c == 2.0 || c == -0.5) {
        // exact in value; -0.5 turns some +0 entries into -0
        EXPECT_EQ(max_abs_diff(b.tape.destination_grad(d), expected), 0.0);
      } else {
        EXPECT_LT(test::relative_error(b.tape.destination_grad(d).data(), expected.data()), 1e-14);
      }
    }
  }
}

TEST(Backward, GradientsVanishPastTheLossWindow) {
  const ModelWeights w = io::random_model(small_config(), 13);
  io::Rng rng(13);
  const std::vector<TokenId> tokens = random_tokens(9, 11, rng);
  LossSpec loss;
  loss.first_row = 2;
  loss.t_cut = 3;
  loss.targets.assign(tokens.begin() + 3, tokens.begin() + 6);
  ForwardResult r = forward(w, tokens);
  backward_branch_grads(w, r.tape, loss);
  for (std::size_t d = 0; d < 5; ++d) {
    const Tensor& g = r.tape.destination_grad(d);
    for (std::size_t p = 5; p < 9; ++p) {
      for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(g.at(p, i), 0.0);
    }
  }
}

TEST(Backward, NeedsARecordedForward) {
  const ModelWeights w = io::random_model(small_config(), 1);
  ExecutionTape empty;
  EXPECT_THROW(backward_branch_grads(w, empty, LossSpec{}), Error);
  ForwardResult r = forward(w, std::vector<TokenId>{1, 2, 3});
  EXPECT_FALSE(r.tape.has_gradients());
  const ModelWeights other = io::random_model(small_config(3), 1);
  EXPECT_THROW(backward_branch_grads(other, r.tape, tail_loss({1, 2, 3}, 1)), ConfigError);
}

TEST(Counters, CountPassesOnThisThread) {
  const ModelWeights w = io::random_model(small_config(), 1);
  reset_pass_counters();
  ForwardResult r = forward(w, std::vector<TokenId>{1, 2, 3});
  backward_branch_grads(w, r.tape, tail_loss({1, 2, 3}, 1));
  forward(w, std::vector<TokenId>{4});
  EXPECT_EQ(pass_counters().forward, 2u);
  EXPECT_EQ(pass_counters().backward, 1u);
  reset_pass_counters();
  EXPECT_EQ(pass_counters().forward, 0u);
}

}  // namespace
}  // namespace csc
