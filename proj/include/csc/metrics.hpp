// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Statistics over per-sample edge-score matrices. Every statistic reads only
// valid-edge positions of the graph; masked entries never enter.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csc/attribution.hpp"
#include "csc/circuit_graph.hpp"

namespace csc::metrics {

struct MetricsConfig {
  std::size_t bins = 256;
  double eps = 1e-12;      // inside ln(p_b + eps)
  double eps_rel = 1e-12;  // relative-change denominator guard

  // Throws ConfigError for bins == 0 or negative/non-finite eps values.
  void validate() const;
};

// Mean |W| over samples and valid edges.
double act_intensity(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph);

struct EntropyResult {
  double value = 0.0;
  double range_max = 0.0;   // histogram covers [0, range_max]
  bool degenerate = false;  // every value zero; value reported as 0
};

// Largest |W| over valid edges of all matrices given.
double max_abs_score(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph);

// Histogram entropy -sum p_b ln(p_b + eps) of pooled |W| over B equal bins
// on [0, range_max]; the maximum value lands in the last bin. range_max
// defaults to the pooled maximum and must cover every value when given.
EntropyResult info_complexity(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph,
                              std::size_t bins, double eps, std::optional<double> range_max = std::nullopt);
// Same statistic on a flat value list.
EntropyResult histogram_entropy(std::span<const double> abs_values, std::size_t bins, double eps,
                                std::optional<double> range_max = std::nullopt);

// Population excess kurtosis m4 / m2^2 - 3 of one value list; nullopt when
// the variance is zero.
std::optional<double> excess_kurtosis(std::span<const double> values);

struct KurtosisResult {
  std::optional<double> value;  // mean over samples with nonzero variance
  std::size_t used = 0;
  std::size_t skipped = 0;
};

KurtosisResult dist_kurtosis(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph);

// Pearson correlation; nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct DiversityResult {
  std::optional<double> value;  // 1 - mean pairwise correlation
  std::size_t pairs = 0;
  std::size_t skipped_samples = 0;  // zero-variance samples left out
};

DiversityResult diversity_score(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph);

struct NodeEntropyResult {
  std::vector<double> entropy;       // one per source node
  std::vector<std::size_t> skipped;  // samples whose outgoing scores were all zero
};

// Per source node: entropy of |outgoing scores| normalized within each
// sample, averaged over samples.
NodeEntropyResult node_output_entropy(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph);

// Row-major n_o x n_i: (mean|W_rl| - mean|W_base|) / (mean|W_base| + eps_rel),
// 0 at masked positions.
std::vector<double> relative_change(std::span<const EdgeScoreMatrix> base, std::span<const EdgeScoreMatrix> rl,
                                    const CircuitGraph& graph, double eps_rel);

struct MetricsReport {
  std::string model;
  std::string dataset;
  double alpha = 0.0;
  std::size_t t_cut = 0;
  std::size_t n_samples = 0;
  double act_intens = 0.0;
  EntropyResult info_complex;
  KurtosisResult dist_kurt;
  DiversityResult diversity;
  NodeEntropyResult node_entropy;
  std::size_t bins = 0;
  double eps = 0.0;
  std::string range_policy;
};

// range_max: shared histogram bound for a model pair (nullopt: own maximum).
MetricsReport compute_report(std::string model, std::string dataset, double alpha, std::size_t t_cut,
                             std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph,
                             const MetricsConfig& config, std::optional<double> range_max);

enum class Better { sft, rl, tie };
std::string_view to_string(Better b);

struct ComparisonRow {
  std::string dataset;
  std::string metric;  // act_intens, info_complex, dist_kurt
  double alpha = 0.0;
  std::optional<double> sft;
  std::optional<double> rl;
  Better better = Better::tie;  // tie also when either side is missing
};

// Act.Intens. and Info.Complex. are better higher, Dist.Kurt. lower.
bool higher_is_better(std::string_view metric);
Better compare_values(std::string_view metric, std::optional<double> sft, std::optional<double> rl);

// Reports pair up by position; each pair must share (dataset, alpha).
// Throws ConfigError on a key mismatch.
std::vector<ComparisonRow> build_comparison(std::span<const MetricsReport> base, std::span<const MetricsReport> rl);

// CSV header: dataset,metric,alpha,sft,rl,better.
std::string comparison_csv(std::span<const ComparisonRow> rows);
// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace csc::metrics
