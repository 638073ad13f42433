// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Edge scoring under the truncated self-entropy loss.
//
// Each sample is re-scored teacher-forced on its own generation: the model
// reads the prompt followed by the first T_cut generated tokens, and logit
// row (prompt_len - 1 + t) is scored against generated token t.
//
//   EAP   score(s, d) = -<g_d, O_s>, g_d the loss gradient at destination d's
//         input (branch path only), from one forward and one backward pass.
//   ACDC  score(s, d) = L(d reads H - t*O_s) - L(clean), one extra forward.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csc/circuit_graph.hpp"
#include "csc/transformer.hpp"

namespace csc {

enum class Method { eap, acdc };
std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view text);

struct AttributionSample {
  std::string id;
  std::vector<TokenId> prompt;
  std::vector<TokenId> generated;
};

struct EdgeScoreMatrix {
  std::string sample_id;
  Method method = Method::eap;
  std::size_t n_sources = 0;
  std::size_t n_destinations = 0;
  std::vector<double> scores;  // row-major n_sources x n_destinations, 0 off-graph
  std::size_t t_cut = 0;
  double loss = 0.0;  // unablated loss

  double at(std::size_t s, std::size_t d) const { return scores.at(s * n_destinations + d); }
};

struct AttributionOptions {
  bool linear_surrogate = false;
  LossKind loss = LossKind::self_entropy;
  // Ablated fraction t used when method == acdc.
  double acdc_fraction = 1.0;
};

// -(1/T_cut) * sum over the first T_cut rows of log softmax(row)[target].
// Throws RangeError when T_cut is 0 or exceeds the rows or targets given.
double self_entropy_loss(const Tensor& logits, std::span<const TokenId> targets, std::size_t t_cut);

// Prompt followed by the first t_cut generated tokens.
std::vector<TokenId> scoring_tokens(const AttributionSample& sample, std::size_t t_cut);
LossSpec scoring_loss(const AttributionSample& sample, std::size_t t_cut);

EdgeScoreMatrix eap_attribute(const ModelWeights& weights, const CircuitGraph& graph,
                              const AttributionSample& sample, std::size_t t_cut,
                              const AttributionOptions& options = {});

// Caches the unablated loss of one sample; each score() is one forward pass.
class AblationScorer {
 public:
  AblationScorer(const ModelWeights& weights, const CircuitGraph& graph, const AttributionSample& sample,
                 std::size_t t_cut, const AttributionOptions& options = {});

  double clean_loss() const { return clean_loss_; }
  // Throws RangeError for fractions outside (0, 1].
  double score(const Edge& edge, double fraction) const;
  EdgeScoreMatrix matrix(double fraction) const;

 private:
  double loss_change(const Tensor& logits) const;

  const ModelWeights& weights_;
  const CircuitGraph& graph_;
  const AttributionSample& sample_;
  std::size_t t_cut_;
  AttributionOptions options_;
  std::vector<TokenId> tokens_;
  LossSpec loss_;
  Tensor clean_logits_;
  double clean_loss_ = 0.0;
};

double acdc_attribute(const ModelWeights& weights, const CircuitGraph& graph, const AttributionSample& sample,
                      std::size_t t_cut, const Edge& edge, double fraction, const AttributionOptions& options = {});

// One matrix per sample, in input order. Work is spread over `jobs` threads;
// results do not depend on the thread count. A failing sample aborts the
// batch with an error of the same category naming the sample id.
std::vector<EdgeScoreMatrix> attribute_dataset(const ModelWeights& weights, const CircuitGraph& graph,
                                               std::span<const AttributionSample> samples, std::size_t t_cut,
                                               Method method, std::size_t jobs = 1,
                                               const AttributionOptions& options = {});

}  // namespace csc
