// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/sample_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>

#include "csc/error.hpp"
#include "json.hpp"

namespace csc::pipeline {

using json = nlohmann::ordered_json;

std::optional<Extractor> parse_extractor(std::string_view text) {
  if (text == "boxed") return Extractor::boxed;
  if (text == "last_number") return Extractor::last_number;
  if (text == "exact") return Extractor::exact;
  return std::nullopt;
}

std::string_view to_string(Extractor e) {
  switch (e) {
    case Extractor::boxed: return "boxed";
    case Extractor::last_number: return "last_number";
    case Extractor::exact: return "exact";
  }
  return "?";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kept: return "kept";
    case Verdict::wrong_answer: return "wrong_answer";
    case Verdict::too_short: return "too_short";
    case Verdict::too_long: return "too_long";
    case Verdict::length_mismatch: return "length_mismatch";
  }
  return "?";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
  for (Verdict v : {Verdict::kept, Verdict::wrong_answer, Verdict::too_short, Verdict::too_long,
                    Verdict::length_mismatch}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

void FilterConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0");
  if (!(beta > 0.0) || !(beta < gamma) || !std::isfinite(gamma)) throw ConfigError("need 0 < beta < gamma");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Contents of the brace group opening at s[open] == '{'.
std::optional<std::string> brace_group(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return std::string(s.substr(open + 1, i - open - 1));
  }
  return std::nullopt;
}

std::optional<double> parse_plain(std::string text) {
  text.erase(std::remove(text.begin(), text.end(), ','), text.end());
  static const std::regex number(R"(^[+-]?(\d+\.?\d*|\.\d+)$)");
  if (!std::regex_match(text, number)) return std::nullopt;
  return std::stod(text);
}

}  // namespace

std::optional<std::string> extract_answer(std::string_view generation, Extractor extractor) {
  switch (extractor) {
    case Extractor::exact:
      return trim(generation);
    case Extractor::boxed: {
      const std::size_t at = generation.rfind("\\boxed{");
      if (at == std::string_view::npos) return std::nullopt;
      auto inner = brace_group(generation, at + 6);
      if (!inner) return std::nullopt;
      return trim(*inner);
    }
    case Extractor::last_number: {
      static const std::regex number(R"([+-]?\d[\d,]*(\.\d+)?(/\d+)?|[+-]?\.\d+)");
      const std::string text(generation);
      std::optional<std::string> last;
      for (auto it = std::sregex_iterator(text.begin(), text.end(), number); it != std::sregex_iterator(); ++it) {
        last = it->str();
      }
      if (last) {
        while (!last->empty() && last->back() == ',') last->pop_back();
      }
      return last;
    }
  }
  return std::nullopt;
}

std::optional<double> parse_number(std::string_view raw) {
  std::string text = trim(raw);
  text.erase(std::remove(text.begin(), text.end(), '$'), text.end());
  text.erase(std::remove_if(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }), text.end());
  if (text.empty()) return std::nullopt;

  for (std::string_view macro : {"\\dfrac{", "\\tfrac{", "\\frac{"}) {
    if (text.rfind(macro, 0) == 0) {
      const std::size_t open_num = macro.size() - 1;
      auto num = brace_group(text, open_num);
      if (!num) return std::nullopt;
      const std::size_t open_den = open_num + num->size() + 2;
      if (open_den >= text.size() || text[open_den] != '{') return std::nullopt;
      auto den = brace_group(text, open_den);
      if (!den || open_den + den->size() + 2 != text.size()) return std::nullopt;
      auto a = parse_plain(*num), b = parse_plain(*den);
      if (!a || !b || *b == 0.0) return std::nullopt;
      return *a / *b;
    }
  }
  const std::size_t slash = text.find('/');
  if (slash != std::string::npos) {
    auto a = parse_plain(text.substr(0, slash)), b = parse_plain(text.substr(slash + 1));
    if (!a || !b || *b == 0.0) return std::nullopt;
    return *a / *b;
  }
  return parse_plain(text);
}

bool answers_match(std::string_view answer, std::string_view gold) {
  const auto a = parse_number(answer), b = parse_number(gold);
  if (a && b) return std::fabs(*a - *b) <= 1e-9 * std::max({1.0, std::fabs(*a), std::fabs(*b)});
  return trim(answer) == trim(gold);
}

bool check_answer(std::string_view generation, std::string_view gold, Extractor extractor) {
  const auto answer = extract_answer(generation, extractor);
  return answer && answers_match(*answer, gold);
}

void grade(std::span<SampleRecord> records, Extractor extractor) {
  for (SampleRecord& r : records) {
    r.base_correct = check_answer(r.base_text, r.gold, extractor);
    r.rl_correct = check_answer(r.rl_text, r.gold, extractor);
  }
}

double mean_length(std::span<const SampleRecord> records) {
  if (records.empty()) throw EmptyInputError("mean_length: no records");
  double sum = 0.0;
  for (const SampleRecord& r : records) {
    sum += (static_cast<double>(r.base_length()) + static_cast<double>(r.rl_length())) / 2.0;
  }
  return sum / static_cast<double>(records.size());
}

std::size_t FilterOutcome::kept() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const SampleRecord& r) { return r.verdict == Verdict::kept; }));
}

FilterOutcome apply_filters(std::vector<SampleRecord> records, const FilterConfig& config) {
  config.validate();
  FilterOutcome out;
  std::vector<SampleRecord> correct;
  for (const SampleRecord& r : records) {
    if (r.base_correct && r.rl_correct) correct.push_back(r);
  }
  if (!correct.empty()) out.mean_length = mean_length(correct);

  for (SampleRecord& r : records) {
    if (!(r.base_correct && r.rl_correct)) {
      r.verdict = Verdict::wrong_answer;
      continue;
    }
    const double t_bar = *out.mean_length;
    const double tb = static_cast<double>(r.base_length());
    const double tr = static_cast<double>(r.rl_length());
    const double t_min = config.beta * t_bar, t_max = config.gamma * t_bar;
    const double mid = (tb + tr) / 2.0;
    const double ratio = mid == 0.0 ? 0.0 : std::fabs(tb - tr) / mid;
    if (tb < t_min || tr < t_min) {
      r.verdict = Verdict::too_short;
    } else if (tb > t_max || tr > t_max) {
      r.verdict = Verdict::too_long;
    } else if (!(ratio < config.delta)) {
      r.verdict = Verdict::length_mismatch;
    } else {
      r.verdict = Verdict::kept;
    }
  }
  out.records = std::move(records);
  return out;
}

std::size_t truncation_length(double mean_length, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("truncation_length: alpha must be > 0");
  if (!(mean_length >= 0.0) || !std::isfinite(mean_length)) {
    throw RangeError("truncation_length: mean length must be finite and >= 0");
  }
  // The slack absorbs products like 0.29 * 100 landing just under an integer.
  const double cut = std::floor(alpha * mean_length * (1.0 + 1e-12));
  return std::max<std::size_t>(1, static_cast<std::size_t>(cut));
}

namespace {

std::vector<TokenId> token_list(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": '" + key + "' must be an array of token ids");
  std::vector<TokenId> out;
  out.reserve(j.size());
  for (const json& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 0xffffffffLL) {
      throw ConfigError(where + ": '" + key + "' holds a non token id");
    }
    out.push_back(static_cast<TokenId>(v.get<long long>()));
  }
  return out;
}

std::string text_field(const json& rec, const std::string& key, const std::string& where) {
  const json& v = rec.at(key);
  if (!v.is_string()) throw ConfigError(where + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

std::vector<SampleRecord> read_jsonl(std::istream& in) {
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "samples line " + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw ConfigError(where + ": expected an object");
    for (const char* key : {"id", "gold"}) {
      if (!rec.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    }
    SampleRecord r;
    r.id = text_field(rec, "id", where);
    r.gold = text_field(rec, "gold", where);
    if (rec.contains("prompt_tokens")) {
      r.prompt_tokens = token_list(rec["prompt_tokens"], "prompt_tokens", where);
    } else if (rec.contains("prompt")) {
      r.prompt_text = text_field(rec, "prompt", where);
    } else {
      throw ConfigError(where + ": missing 'prompt_tokens'");
    }
    if (rec.contains("prompt") && r.prompt_text.empty()) r.prompt_text = text_field(rec, "prompt", where);

    const bool has_base = rec.contains("base_tokens"), has_rl = rec.contains("rl_tokens");
    if (has_base != has_rl) throw ConfigError(where + ": base_tokens and rl_tokens must appear together");
    r.has_generations = has_base;
    if (has_base) {
      r.base_tokens = token_list(rec["base_tokens"], "base_tokens", where);
      r.rl_tokens = token_list(rec["rl_tokens"], "rl_tokens", where);
      for (const char* key : {"base_text", "rl_text"}) {
        if (!rec.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
      }
      r.base_text = text_field(rec, "base_text", where);
      r.rl_text = text_field(rec, "rl_text", where);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SampleRecord> read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open samples file '" + path + "'");
  return read_jsonl(in);
}

void write_jsonl(std::ostream& out, std::span<const SampleRecord> records,
                 const std::vector<std::pair<double, std::size_t>>& t_cuts) {
  for (const SampleRecord& r : records) {
    json j;
    j["id"] = r.id;
    if (!r.prompt_text.empty()) j["prompt"] = r.prompt_text;
    j["prompt_tokens"] = r.prompt_tokens;
    j["gold"] = r.gold;
    j["base_tokens"] = r.base_tokens;
    j["rl_tokens"] = r.rl_tokens;
    j["base_text"] = r.base_text;
    j["rl_text"] = r.rl_text;
    j["base_correct"] = r.base_correct;
    j["rl_correct"] = r.rl_correct;
    j["verdict"] = std::string(to_string(r.verdict));
    if (r.verdict == Verdict::kept && !t_cuts.empty()) {
      j["T_cut"] = t_cuts.front().second;
      json by_alpha = json::object();
      for (const auto& [alpha, t_cut] : t_cuts) {
        std::ostringstream key;
        key << alpha;
        by_alpha[key.str()] = t_cut;
      }
      j["T_cut_by_alpha"] = by_alpha;
    } else {
      j["T_cut"] = nullptr;
    }
    out << j.dump() << '\n';
  }
}

ToyTokenizer::ToyTokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  if (vocab_.empty()) throw ConfigError("tokenizer: empty vocabulary");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("tokenizer: duplicate token '" + vocab_[i] + "'");
    }
  }
}

ToyTokenizer ToyTokenizer::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary file '" + path + "'");
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  return ToyTokenizer(std::move(vocab));
}

std::optional<TokenId> ToyTokenizer::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> ToyTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::istringstream words{std::string(text)};
  std::string word;
  const auto unk = find("<unk>");
  while (words >> word) {
    if (auto id = find(word)) {
      out.push_back(*id);
      continue;
    }
    for (unsigned char byte : word) {
      char spelled[8];
      std::snprintf(spelled, sizeof spelled, "<0x%02X>", byte);
      if (auto id = find(spelled)) {
        out.push_back(*id);
      } else if (unk) {
        out.push_back(*unk);
      } else {
        throw ConfigError("tokenizer: cannot encode '" + word + "' (no byte token, no <unk>)");
      }
    }
  }
  return out;
}

std::string ToyTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  bool in_bytes = false;
  for (TokenId id : ids) {
    if (id >= vocab_.size()) throw RangeError("tokenizer: id " + std::to_string(id) + " outside vocabulary");
    const std::string& tok = vocab_[id];
    const bool is_byte = tok.size() == 6 && tok.rfind("<0x", 0) == 0 && tok.back() == '>';
    if (is_byte) {
      if (!in_bytes && !out.empty()) out += ' ';
      out += static_cast<char>(std::stoi(tok.substr(3, 2), nullptr, 16));
      in_bytes = true;
      continue;
    }
    if (!out.empty()) out += ' ';
    out += tok;
    in_bytes = false;
  }
  return out;
}

}  // namespace csc::pipeline
