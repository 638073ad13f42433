// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test binaries.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "csc/attribution.hpp"
#include "csc/model_io.hpp"
#include "csc/tensor.hpp"
#include "csc/transformer.hpp"

namespace csc::test {

Tensor random_tensor(const Shape& shape, io::Rng& rng, double scale = 1.0);

// Norm-wise relative error ||a - b|| / max(||a||, ||b||); 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

// Central differences of x -> <r, f(x)> at step h for every entry of x.
Tensor numeric_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, const Tensor& r,
                        double h = 1e-5);

// Model used across tests: L=2, d_model=16, n_heads=2, V=11.
ModelConfig small_config(std::size_t n_layers = 2);
std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, io::Rng& rng);
AttributionSample random_sample(const std::string& id, std::size_t prompt_len, std::size_t gen_len,
                                std::size_t vocab, io::Rng& rng);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);
std::string read_bytes(const std::filesystem::path& p);

// Directory holding the checked-in fixture pair.
std::filesystem::path fixture_dir();

// Straight-line evaluator written without the library's primitives or tape;
// returns [P, V] logits. With `ablation`, the destination named there reads
// the stream minus fraction * (that source's output).
Tensor reference_logits(const ModelWeights& w, const std::vector<TokenId>& tokens,
                        std::optional<EdgeAblation> ablation = std::nullopt);

}  // namespace csc::test
