// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Question bookkeeping for a model pair: answer checking, the mean-length
// statistic, length/balance filtering and the truncation length.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "csc/tensor.hpp"

namespace csc::pipeline {

enum class Extractor { boxed, last_number, exact };
std::optional<Extractor> parse_extractor(std::string_view text);
std::string_view to_string(Extractor e);

// Listed in filter priority order.
enum class Verdict { kept, wrong_answer, too_short, too_long, length_mismatch };
std::string_view to_string(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view text);

struct SampleRecord {
  std::string id;
  std::string prompt_text;  // only needed when prompt_tokens must be derived
  std::vector<TokenId> prompt_tokens;
  std::string gold;
  std::vector<TokenId> base_tokens;
  std::vector<TokenId> rl_tokens;
  std::string base_text;
  std::string rl_text;
  bool has_generations = true;  // false when the input carried no generations
  bool base_correct = false;
  bool rl_correct = false;
  Verdict verdict = Verdict::wrong_answer;

  std::size_t base_length() const { return base_tokens.size(); }
  std::size_t rl_length() const { return rl_tokens.size(); }
};

struct FilterConfig {
  double alpha = 0.1;
  double beta = 0.5;
  double gamma = 2.0;
  double delta = 0.5;

  // Throws ConfigError unless alpha > 0, 0 < beta < gamma and 0 < delta < 1.
  void validate() const;
};

// Answer pulled out of a generation, or nullopt when nothing matches.
std::optional<std::string> extract_answer(std::string_view generation, Extractor extractor);
// Integers, decimals, thousands separators, "a/b" and \frac{a}{b}.
std::optional<double> parse_number(std::string_view text);
// Numeric comparison when both sides parse as numbers, else trimmed equality.
bool answers_match(std::string_view answer, std::string_view gold);
bool check_answer(std::string_view generation, std::string_view gold, Extractor extractor);

// Sets base_correct / rl_correct from the texts.
void grade(std::span<SampleRecord> records, Extractor extractor);

// (1/|Q|) * sum of (T_base + T_RL) / 2. Throws EmptyInputError on no records.
double mean_length(std::span<const SampleRecord> records);

struct FilterOutcome {
  std::vector<SampleRecord> records;  // input order, verdicts assigned
  std::optional<double> mean_length;  // over correctness-passing records
  std::size_t kept() const;
};

// Assigns a verdict to every record. The mean length is taken over the
// records both models answered correctly, before the length filters.
FilterOutcome apply_filters(std::vector<SampleRecord> records, const FilterConfig& config);

// max(1, floor(alpha * mean_length)).
std::size_t truncation_length(double mean_length, double alpha);

// JSONL, one record per line. Reading requires id and gold, plus either
// prompt_tokens or prompt; generations may be absent.
std::vector<SampleRecord> read_jsonl(std::istream& in);
std::vector<SampleRecord> read_jsonl_file(const std::string& path);
// Writes the input schema plus verdict, correctness flags and T_cut (the
// first entry of `t_cuts`; the full map goes under T_cut_by_alpha).
void write_jsonl(std::ostream& out, std::span<const SampleRecord> records,
                 const std::vector<std::pair<double, std::size_t>>& t_cuts);

// Whitespace tokenizer over an explicit vocabulary file (one token per line,
// id = line index). Words missing from the vocabulary fall back to byte
// tokens spelled <0xHH>, then to <unk>.
class ToyTokenizer {
 public:
  static ToyTokenizer from_file(const std::string& path);
  explicit ToyTokenizer(std::vector<std::string> vocab);

  std::size_t size() const { return vocab_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace csc::pipeline
