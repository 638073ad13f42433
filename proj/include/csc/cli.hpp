// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Driver behind the csc binary: filter, attribute both models, compute
// metrics, compare, write artifacts.

#pragma once

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "csc/attribution.hpp"
#include "csc/metrics.hpp"
#include "csc/sample_pipeline.hpp"

namespace csc::cli {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, io_error = 3, numeric_error = 4, empty_after_filter = 5 };

// Maps the error hierarchy onto exit codes.
int exit_code_for(const std::exception& e);

struct RunConfig {
  std::string base_path;
  std::string rl_path;
  std::string samples_path;
  std::string out_dir;
  std::string vocab_path;  // needed only when prompts arrive as text

  std::vector<double> alphas{0.1};
  pipeline::FilterConfig filter;
  Method method = Method::eap;
  double acdc_fraction = 1.0;
  metrics::MetricsConfig metrics;
  std::uint64_t seed = 0;
  std::optional<Precision> precision;  // default: the base model's
  std::size_t jobs = 1;

  std::size_t max_new = 32;
  std::optional<TokenId> eos;
  pipeline::Extractor extractor = pipeline::Extractor::boxed;
  std::string dataset = "samples";

  // Checks values and that every input path exists. Throws ConfigError.
  void validate() const;
};

// Reads CSC_PRECISION; throws ConfigError for values other than f32/f64.
std::optional<Precision> precision_from_env();

// Fills tokens and texts for records without generations by greedy decoding
// both models. Texts come from the tokenizer when given, else the ids
// joined by spaces.
void generate_missing(std::vector<pipeline::SampleRecord>& records, const ModelWeights& base,
                      const ModelWeights& rl, const pipeline::ToyTokenizer* tokenizer, std::size_t max_new,
                      std::optional<TokenId> eos);

// Writes samples.jsonl, scores_base.csc(.json), scores_rl.csc(.json),
// report.json, table.csv, figdata/*.csv and manifest.json under out_dir.
// Nothing is written unless every step before output succeeds.
int cmd_run(const RunConfig& config, std::ostream& log);
// Throws instead of returning an exit code.
void run(const RunConfig& config, std::ostream& log);

// Prints config, tensor checksums and the edge count of a model file.
int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err);

}  // namespace csc::cli
