// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// csc run       filter, attribute and compare a base/rl model pair
// csc validate  inspect a model container
// csc graph     print the edge list for L layers

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "csc/circuit_graph.hpp"
#include "csc/cli.hpp"
#include "csc/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Edge attribution over a base/rl model pair"};
  app.require_subcommand(1);

  csc::cli::RunConfig run;
  std::string method = "eap", extractor = "boxed", precision;
  long long eos = -1;
  auto* cmd_run = app.add_subcommand("run", "filter samples, score edges, write report");
  cmd_run->add_option("--base", run.base_path, "base model container")->required();
  cmd_run->add_option("--rl", run.rl_path, "post-trained model container")->required();
  cmd_run->add_option("--samples", run.samples_path, "input JSONL")->required();
  cmd_run->add_option("--out", run.out_dir, "output directory")->required();
  cmd_run->add_option("--alpha", run.alphas, "truncation scale(s)")->expected(1, -1);
  cmd_run->add_option("--beta", run.filter.beta, "minimum length scale")->capture_default_str();
  cmd_run->add_option("--gamma", run.filter.gamma, "maximum length scale")->capture_default_str();
  cmd_run->add_option("--delta", run.filter.delta, "length balance bound")->capture_default_str();
  cmd_run->add_option("--method", method, "eap or acdc")->capture_default_str();
  cmd_run->add_option("--ablation-fraction", run.acdc_fraction, "ablated fraction for acdc")->capture_default_str();
  cmd_run->add_option("--bins", run.metrics.bins, "histogram bins")->capture_default_str();
  cmd_run->add_option("--eps", run.metrics.eps, "entropy epsilon")->capture_default_str();
  cmd_run->add_option("--eps-rel", run.metrics.eps_rel, "relative change guard")->capture_default_str();
  cmd_run->add_option("--seed", run.seed, "run seed, recorded in the manifest")->capture_default_str();
  cmd_run->add_option("--jobs", run.jobs, "worker threads")->capture_default_str();
  cmd_run->add_option("--precision", precision, "f32 or f64 (CSC_PRECISION wins)");
  cmd_run->add_option("--vocab", run.vocab_path, "vocabulary file for text prompts");
  cmd_run->add_option("--max-new", run.max_new, "generation budget for samples without generations")
      ->capture_default_str();
  cmd_run->add_option("--eos", eos, "end-of-sequence token id");
  cmd_run->add_option("--extractor", extractor, "boxed, last_number or exact")->capture_default_str();
  cmd_run->add_option("--dataset", run.dataset, "dataset tag for the report")->capture_default_str();

  std::string model_path;
  auto* cmd_validate = app.add_subcommand("validate", "print config, checksums and edge count of a model");
  cmd_validate->add_option("model", model_path, "model container")->required();

  std::size_t layers = 0;
  auto* cmd_graph = app.add_subcommand("graph", "dump the edge list");
  cmd_graph->add_option("--layers", layers, "layer count")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : csc::cli::config_error;
  }

  if (*cmd_validate) return csc::cli::cmd_validate(model_path, std::cout, std::cerr);

  if (*cmd_graph) {
    try {
      std::cout << csc::build_graph(layers).dump();
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return csc::cli::exit_code_for(e);
    }
  }

  const auto m = csc::parse_method(method);
  if (!m) {
    std::cerr << "error: --method must be eap or acdc\n";
    return csc::cli::config_error;
  }
  run.method = *m;
  const auto x = csc::pipeline::parse_extractor(extractor);
  if (!x) {
    std::cerr << "error: --extractor must be boxed, last_number or exact\n";
    return csc::cli::config_error;
  }
  run.extractor = *x;
  if (!precision.empty()) {
    run.precision = csc::parse_precision(precision);
    if (!run.precision) {
      std::cerr << "error: --precision must be f32 or f64\n";
      return csc::cli::config_error;
    }
  }
  if (eos >= 0) run.eos = static_cast<csc::TokenId>(eos);
  run.filter.alpha = run.alphas.front();
  return csc::cli::cmd_run(run, std::cerr);
}
