// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Writes a desk-scale model pair plus synthetic questions:
//   base.csc      random_model(config, seed)
//   rl.csc        base with W_o and W_down scaled by --scale, then Gaussian
//                 noise of std --noise / sqrt(d_model) on every projection
//   vocab.txt     <unk>, </s>, digits 0-9, words w0..w19
//   samples.jsonl prompts with greedy generations from both models; the
//                 texts carry a synthetic \boxed{} answer so the filters see
//                 a mix of correct and wrong answers.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "csc/model_io.hpp"
#include "csc/sample_pipeline.hpp"
#include "json.hpp"

namespace {

csc::ModelConfig fixture_config() {
  csc::ModelConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.n_heads = 2;
  c.d_query = 8;
  c.d_attn = 16;
  c.vocab_size = 32;
  c.max_positions = 96;
  return c;
}

std::vector<std::string> fixture_vocab() {
  std::vector<std::string> v{"<unk>", "</s>"};
  for (int i = 0; i < 10; ++i) v.push_back(std::to_string(i));
  for (int i = 0; i < 20; ++i) v.push_back("w" + std::to_string(i));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate a fixture model pair and samples"};
  std::string out_dir;
  std::uint64_t seed = 7;
  std::size_t questions = 24;
  double scale = 1.5, noise = 0.01;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--questions", questions)->capture_default_str();
  app.add_option("--scale", scale, "W_o / W_down factor for rl")->capture_default_str();
  app.add_option("--noise", noise, "rl perturbation std before 1/sqrt(d_model)")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const csc::ModelConfig config = fixture_config();
    const csc::ModelWeights base = csc::io::random_model(config, seed);
    csc::ModelWeights rl = base;
    csc::io::Rng perturb(seed + 1);
    const double std_dev = noise / std::sqrt(static_cast<double>(config.d_model));
    for (auto& [name, t] : rl.named_tensors()) {
      const bool widened = name.ends_with("attn.w_o") || name.ends_with("ffn.w_down");
      const bool projection = name.find(".attn.w_") != std::string::npos || name.find(".ffn.w_") != std::string::npos;
      if (!projection) continue;
      for (double& v : t->data()) {
        if (widened) v *= scale;
        v += std_dev * perturb.normal();
      }
    }
    csc::io::save_model(base, (fs::path(out_dir) / "base.csc").string());
    csc::io::save_model(rl, (fs::path(out_dir) / "rl.csc").string());

    const std::vector<std::string> vocab = fixture_vocab();
    {
      std::ofstream v(fs::path(out_dir) / "vocab.txt");
      for (const auto& tok : vocab) v << tok << '\n';
    }
    const csc::pipeline::ToyTokenizer tokenizer(vocab);
    const csc::TokenId eos = 1;

    csc::io::Rng rng(seed + 2);
    auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng.next() % (hi - lo + 1); };
    std::ofstream out(fs::path(out_dir) / "samples.jsonl");
    for (std::size_t q = 0; q < questions; ++q) {
      std::vector<csc::TokenId> prompt(pick(3, 6));
      for (auto& t : prompt) t = static_cast<csc::TokenId>(pick(2, config.vocab_size - 1));
      const std::size_t budget = pick(24, 60);
      const auto base_tokens = csc::decode_greedy(base, prompt, budget, eos);
      const auto rl_tokens = csc::decode_greedy(rl, prompt, pick(budget - 2, budget + 2), eos);
      const std::string gold = std::to_string(pick(0, 99));
      const std::string wrong = std::to_string(100 + pick(0, 99));
      const std::size_t fate = pick(0, 9);  // 0: base wrong, 1: rl wrong, else both right
      nlohmann::ordered_json j;
      char id[16];
      std::snprintf(id, sizeof id, "q%03zu", q);
      j["id"] = id;
      j["prompt_tokens"] = prompt;
      j["gold"] = gold;
      j["base_tokens"] = base_tokens;
      j["rl_tokens"] = rl_tokens;
      j["base_text"] = tokenizer.decode(base_tokens) + " \\boxed{" + (fate == 0 ? wrong : gold) + "}";
      j["rl_text"] = tokenizer.decode(rl_tokens) + " \\boxed{" + (fate == 1 ? wrong : gold) + "}";
      out << j.dump() << '\n';
    }
    std::cout << "base " << csc::io::hex64(csc::io::model_checksum(base)) << "\nrl   "
              << csc::io::hex64(csc::io::model_checksum(rl)) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
