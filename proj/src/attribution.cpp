// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/attribution.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "csc/error.hpp"
#include "csc/ops.hpp"

namespace csc {

std::string_view to_string(Method m) { return m == Method::eap ? "eap" : "acdc"; }

std::optional<Method> parse_method(std::string_view text) {
  if (text == "eap") return Method::eap;
  if (text == "acdc") return Method::acdc;
  return std::nullopt;
}

double self_entropy_loss(const Tensor& logits, std::span<const TokenId> targets, std::size_t t_cut) {
  return ops::self_entropy(logits, targets, 0, t_cut);
}

namespace {

void check_sample(const AttributionSample& sample, std::size_t t_cut) {
  if (sample.prompt.empty()) throw RangeError("sample '" + sample.id + "': empty prompt");
  if (t_cut < 1 || t_cut > sample.generated.size()) {
    throw RangeError("sample '" + sample.id + "': T_cut " + std::to_string(t_cut) + " outside [1, " +
                     std::to_string(sample.generated.size()) + "]");
  }
}

EdgeScoreMatrix empty_matrix(const CircuitGraph& graph, const AttributionSample& sample, Method method,
                             std::size_t t_cut) {
  EdgeScoreMatrix m;
  m.sample_id = sample.id;
  m.method = method;
  m.n_sources = graph.n_sources();
  m.n_destinations = graph.n_destinations();
  m.scores.assign(m.n_sources * m.n_destinations, 0.0);
  m.t_cut = t_cut;
  return m;
}

void check_graph(const ModelWeights& weights, const CircuitGraph& graph) {
  if (graph.n_layers() != weights.config.n_layers) {
    throw ConfigError("attribution: graph has " + std::to_string(graph.n_layers()) + " layers, model has " +
                      std::to_string(weights.config.n_layers));
  }
}

}  // namespace

std::vector<TokenId> scoring_tokens(const AttributionSample& sample, std::size_t t_cut) {
  check_sample(sample, t_cut);
  std::vector<TokenId> tokens = sample.prompt;
  tokens.insert(tokens.end(), sample.generated.begin(), sample.generated.begin() + static_cast<long>(t_cut));
  return tokens;
}

LossSpec scoring_loss(const AttributionSample& sample, std::size_t t_cut) {
  check_sample(sample, t_cut);
  LossSpec spec;
  spec.targets.assign(sample.generated.begin(), sample.generated.begin() + static_cast<long>(t_cut));
  spec.first_row = sample.prompt.size() - 1;
  spec.t_cut = t_cut;
  return spec;
}

EdgeScoreMatrix eap_attribute(const ModelWeights& weights, const CircuitGraph& graph,
                              const AttributionSample& sample, std::size_t t_cut,
                              const AttributionOptions& options) {
  check_graph(weights, graph);
  const std::vector<TokenId> tokens = scoring_tokens(sample, t_cut);
  ForwardOptions fwd;
  fwd.linear_surrogate = options.linear_surrogate;
  ForwardResult run = forward(weights, tokens, fwd);

  LossSpec loss = scoring_loss(sample, t_cut);
  loss.kind = options.loss;
  if (loss.kind == LossKind::linearized_self_entropy) loss.reference_logits = run.logits;
  backward_branch_grads(weights, run.tape, loss);

  EdgeScoreMatrix m = empty_matrix(graph, sample, Method::eap, t_cut);
  m.loss = run.tape.loss();
  for (const Edge& e : graph.edges()) {
    const double s = -dot(run.tape.destination_grad(e.destination), run.tape.source_output(e.source));
    if (!std::isfinite(s)) throw NumericError("eap_attribute: non-finite score");
    m.scores[e.source * m.n_destinations + e.destination] = s;
  }
  return m;
}

AblationScorer::AblationScorer(const ModelWeights& weights, const CircuitGraph& graph,
                               const AttributionSample& sample, std::size_t t_cut,
                               const AttributionOptions& options)
    : weights_(weights), graph_(graph), sample_(sample), t_cut_(t_cut), options_(options) {
  check_graph(weights, graph);
  tokens_ = scoring_tokens(sample, t_cut);
  loss_ = scoring_loss(sample, t_cut);
  ForwardOptions fwd;
  fwd.linear_surrogate = options.linear_surrogate;
  clean_logits_ = forward(weights, tokens_, fwd).logits;
  clean_loss_ = ops::self_entropy(clean_logits_, loss_.targets, loss_.first_row, loss_.t_cut);
}

double AblationScorer::loss_change(const Tensor& logits) const {
  if (options_.loss == LossKind::self_entropy) {
    return ops::self_entropy_change(clean_logits_, logits, loss_.targets, loss_.first_row, loss_.t_cut);
  }
  const Tensor slope = ops::self_entropy_vjp(clean_logits_, loss_.targets, loss_.first_row, loss_.t_cut);
  return dot(slope, ops::sub(logits, clean_logits_));
}

double AblationScorer::score(const Edge& edge, double fraction) const {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw RangeError("acdc: ablation fraction " + std::to_string(fraction) + " outside (0, 1]");
  }
  if (!graph_.is_valid(edge.source, edge.destination)) {
    throw RangeError("acdc: (" + std::to_string(edge.source) + ", " + std::to_string(edge.destination) +
                     ") is not an edge");
  }
  ForwardOptions fwd;
  fwd.linear_surrogate = options_.linear_surrogate;
  fwd.ablation = EdgeAblation{edge.source, edge.destination, fraction};
  const Tensor logits = forward(weights_, tokens_, fwd).logits;
  const double delta = loss_change(logits);
  if (!std::isfinite(delta)) throw NumericError("acdc: non-finite loss change");
  return delta;
}

EdgeScoreMatrix AblationScorer::matrix(double fraction) const {
  EdgeScoreMatrix m = empty_matrix(graph_, sample_, Method::acdc, t_cut_);
  m.loss = clean_loss_;
  for (const Edge& e : graph_.edges()) m.scores[e.source * m.n_destinations + e.destination] = score(e, fraction);
  return m;
}

double acdc_attribute(const ModelWeights& weights, const CircuitGraph& graph, const AttributionSample& sample,
                      std::size_t t_cut, const Edge& edge, double fraction, const AttributionOptions& options) {
  return AblationScorer(weights, graph, sample, t_cut, options).score(edge, fraction);
}

namespace {

[[noreturn]] void rethrow_for_sample(std::exception_ptr ep, const std::string& id) {
  const std::string prefix = "sample '" + id + "': ";
  try {
    std::rethrow_exception(ep);
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const RangeError& e) {
    throw RangeError(prefix + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace

std::vector<EdgeScoreMatrix> attribute_dataset(const ModelWeights& weights, const CircuitGraph& graph,
                                               std::span<const AttributionSample> samples, std::size_t t_cut,
                                               Method method, std::size_t jobs,
                                               const AttributionOptions& options) {
  std::vector<EdgeScoreMatrix> out(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        out[i] = method == Method::eap
                     ? eap_attribute(weights, graph, samples[i], t_cut, options)
                     : AblationScorer(weights, graph, samples[i], t_cut, options).matrix(options.acdc_fraction);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(std::max<std::size_t>(jobs, 1), samples.size());
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (errors[i]) rethrow_for_sample(errors[i], samples[i].id);
  }
  return out;
}

}  // namespace csc
