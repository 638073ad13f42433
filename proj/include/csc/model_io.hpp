// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tensor container, version 1. All integers and reals little-endian.
//
//   bytes 0..3    magic "CSC1"
//   bytes 4..11   u64 header length N
//   bytes 12..    N bytes of UTF-8 JSON, space padded so 12 + N is a
//                 multiple of 8
//   then          payload
//
// The header maps each tensor name to {"dtype": "f32"|"f64", "shape": [..],
// "offset": n} where offset is relative to the payload start and a multiple
// of 8. Tensors never overlap. The reserved key "__config__" holds free-form
// metadata; for model files it is the model config (see config_to_json).
// Keys are written sorted, so equal contents give equal bytes.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csc/attribution.hpp"
#include "csc/error.hpp"
#include "csc/tensor.hpp"
#include "csc/transformer.hpp"
#include "json.hpp"

namespace csc::io {

enum class FormatErrorCode { io, bad_magic, truncated, bad_header, inconsistent, unknown_dtype, missing_tensor };
std::string_view to_string(FormatErrorCode code);

class FormatError : public Error {
 public:
  FormatError(FormatErrorCode code, const std::string& message);
  FormatErrorCode code() const { return code_; }

 private:
  FormatErrorCode code_;
};

enum class DType { f32, f64 };

struct StoredTensor {
  DType dtype = DType::f64;
  Tensor value;
};

struct Container {
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, StoredTensor> tensors;
};

std::vector<std::uint8_t> encode_container(const Container& c);
Container decode_container(const std::vector<std::uint8_t>& bytes);
void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

// Config schema: n_layers, d_model, d_ff, n_heads, d_query, d_attn,
// vocab_size, max_positions (integers); norm ("layernorm"|"rmsnorm");
// activation ("silu"|"gelu"); positional ("none"|"learned_absolute"|
// "rotary"); precision ("f32"|"f64"); norm_eps, rope_base (reals).
nlohmann::json config_to_json(const ModelConfig& config);
// Throws ConfigError on a missing or ill-typed field.
ModelConfig config_from_json(const nlohmann::json& j);

// Tensors are stored in the config's precision.
Container model_container(const ModelWeights& weights);
ModelWeights model_from_container(const Container& c);
void save_model(const ModelWeights& weights, const std::string& path);
ModelWeights load_model(const std::string& path);

// FNV-1a 64 over the stored little-endian bytes.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
std::uint64_t tensor_checksum(const Tensor& t, DType dtype);
// Per-tensor checksums in canonical order, then one over all names and bytes.
std::vector<std::pair<std::string, std::uint64_t>> tensor_checksums(const ModelWeights& weights);
std::uint64_t model_checksum(const ModelWeights& weights);

// xoshiro256** seeded through SplitMix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next();
  double uniform();  // [0, 1) with 53 random bits
  double uniform(double lo, double hi);
  double normal();  // Box-Muller, one draw per call

 private:
  std::uint64_t s_[4];
};

// Embeddings and norm offsets ~ U(-0.1, 0.1); norm gains 1 + U(-0.1, 0.1);
// projection matrices U(-0.1, 0.1) / sqrt(d_model). Tensors are filled in
// canonical name order from one stream.
ModelWeights random_model(const ModelConfig& config, std::uint64_t seed);

// One row per (alpha, sample).
struct ScoreRow {
  std::string sample_id;
  double alpha = 0.0;
  std::size_t t_cut = 0;
  double loss = 0.0;
};

struct ScoreFile {
  std::string model;
  Method method = Method::eap;
  std::size_t n_sources = 0;
  std::size_t n_destinations = 0;
  std::vector<ScoreRow> rows;
  Tensor edge_scores;  // [rows, n_sources, n_destinations]

  std::vector<EdgeScoreMatrix> matrices(double alpha) const;
};

ScoreFile make_score_file(std::string model, Method method,
                          const std::vector<std::pair<double, std::vector<EdgeScoreMatrix>>>& by_alpha,
                          std::size_t n_sources, std::size_t n_destinations);
// Writes `path` (container with tensor "edge_scores") and `path`.json.
void save_scores(const ScoreFile& scores, const std::string& path);
ScoreFile load_scores(const std::string& path);
std::string sidecar_json(const ScoreFile& scores);

}  // namespace csc::io
