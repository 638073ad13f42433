// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>

#include "csc/circuit_graph.hpp"
#include "csc/error.hpp"
#include "csc/model_io.hpp"
#include "json.hpp"

namespace csc::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {
constexpr const char* kVersion = "0.1.0";
}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const io::FormatError*>(&e)) return io_error;
  if (dynamic_cast<const NumericError*>(&e)) return numeric_error;
  if (dynamic_cast<const EmptyInputError*>(&e)) return empty_after_filter;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const RangeError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return config_error;
  }
  return failure;
}

std::optional<Precision> precision_from_env() {
  const char* v = std::getenv("CSC_PRECISION");
  if (!v || !*v) return std::nullopt;
  auto p = parse_precision(v);
  if (!p) throw ConfigError(std::string("CSC_PRECISION must be f32 or f64, got '") + v + "'");
  return p;
}

void RunConfig::validate() const {
  auto require_file = [](const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing --") + what);
    if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " file '" + path + "' does not exist");
  };
  require_file(base_path, "base");
  require_file(rl_path, "rl");
  require_file(samples_path, "samples");
  if (!vocab_path.empty()) require_file(vocab_path, "vocab");
  if (out_dir.empty()) throw ConfigError("missing --out");
  if (fs::exists(out_dir) && !fs::is_directory(out_dir)) {
    throw ConfigError("output path '" + out_dir + "' exists and is not a directory");
  }
  if (alphas.empty()) throw ConfigError("need at least one --alpha");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    pipeline::FilterConfig f = filter;
    f.alpha = alphas[i];
    f.validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (alphas[j] == alphas[i]) throw ConfigError("duplicate --alpha " + metrics::format_double(alphas[i]));
    }
  }
  if (std::find(alphas.begin(), alphas.end(), filter.alpha) == alphas.end()) {
    throw ConfigError("filter alpha " + metrics::format_double(filter.alpha) + " is not one of the declared scales");
  }
  if (!(acdc_fraction > 0.0 && acdc_fraction <= 1.0)) throw ConfigError("ablation fraction must lie in (0, 1]");
  metrics.validate();
  if (jobs == 0) throw ConfigError("--jobs must be >= 1");
  if (dataset.empty() || dataset.find_first_of(",\n\"") != std::string::npos) {
    throw ConfigError("--dataset must be nonempty and free of commas, quotes and newlines");
  }
}

void generate_missing(std::vector<pipeline::SampleRecord>& records, const ModelWeights& base, const ModelWeights& rl,
                      const pipeline::ToyTokenizer* tokenizer, std::size_t max_new, std::optional<TokenId> eos) {
  auto render = [&](const std::vector<TokenId>& ids) {
    if (tokenizer) return tokenizer->decode(ids);
    std::string s;
    for (TokenId id : ids) s += (s.empty() ? "" : " ") + std::to_string(id);
    return s;
  };
  for (pipeline::SampleRecord& r : records) {
    if (r.prompt_tokens.empty() && !r.prompt_text.empty()) {
      if (!tokenizer) throw ConfigError("sample '" + r.id + "' has a text prompt; pass --vocab to tokenize it");
      r.prompt_tokens = tokenizer->encode(r.prompt_text);
    }
    if (r.has_generations) continue;
    if (r.prompt_tokens.empty()) throw ConfigError("sample '" + r.id + "' has an empty prompt");
    auto budget = [&](const ModelWeights& w) {
      // Generation stops at the context window.
      const std::size_t room = w.config.max_positions > r.prompt_tokens.size()
                                   ? w.config.max_positions - r.prompt_tokens.size()
                                   : 0;
      return std::min(max_new, room);
    };
    r.base_tokens = decode_greedy(base, r.prompt_tokens, budget(base), eos);
    r.rl_tokens = decode_greedy(rl, r.prompt_tokens, budget(rl), eos);
    r.base_text = render(r.base_tokens);
    r.rl_text = render(r.rl_tokens);
    r.has_generations = true;
  }
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::FormatError(io::FormatErrorCode::io, "cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::uint64_t text_checksum(const std::string& s) {
  return io::fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io::FormatError(io::FormatErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw io::FormatError(io::FormatErrorCode::io, "write to '" + path.string() + "' failed");
}

ojson optional_number(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson report_json(const metrics::MetricsReport& r, const CircuitGraph& graph) {
  ojson nodes = ojson::object();
  for (std::size_t s = 0; s < graph.n_sources(); ++s) nodes[graph.source(s).name] = r.node_entropy.entropy[s];
  return {{"model", r.model},
          {"n_samples", r.n_samples},
          {"act_intens", r.act_intens},
          {"info_complex", r.info_complex.value},
          {"info_complex_degenerate", r.info_complex.degenerate},
          {"histogram_range_max", r.info_complex.range_max},
          {"dist_kurt", optional_number(r.dist_kurt.value)},
          {"dist_kurt_skipped", r.dist_kurt.skipped},
          {"diversity", optional_number(r.diversity.value)},
          {"diversity_pairs", r.diversity.pairs},
          {"diversity_skipped_samples", r.diversity.skipped_samples},
          {"node_output_entropy", nodes}};
}

std::string alpha_tag(double alpha) {
  std::string s = metrics::format_double(alpha);
  for (char& c : s) {
    if (c == '.') c = 'p';
  }
  return s;
}

struct Section {
  double alpha = 0.0;
  std::size_t t_cut = 0;
  std::vector<EdgeScoreMatrix> base, rl;
  metrics::MetricsReport base_report, rl_report;
  std::vector<metrics::ComparisonRow> rows;
  std::vector<double> rel_change;
};

std::vector<AttributionSample> attribution_samples(const std::vector<pipeline::SampleRecord>& kept, bool rl) {
  std::vector<AttributionSample> out;
  for (const pipeline::SampleRecord& r : kept) out.push_back({r.id, r.prompt_tokens, rl ? r.rl_tokens : r.base_tokens});
  return out;
}

}  // namespace

void run(const RunConfig& config, std::ostream& log) {
  config.validate();
  const std::optional<Precision> env_precision = precision_from_env();

  ModelWeights base = io::load_model(config.base_path);
  ModelWeights rl = io::load_model(config.rl_path);
  if (base.config.n_layers != rl.config.n_layers || base.config.vocab_size != rl.config.vocab_size) {
    throw ConfigError("base and rl models disagree on layer count or vocabulary");
  }
  const Precision prec = env_precision.value_or(config.precision.value_or(base.config.precision));
  PrecisionScope scope(prec);

  std::optional<pipeline::ToyTokenizer> tokenizer;
  if (!config.vocab_path.empty()) tokenizer = pipeline::ToyTokenizer::from_file(config.vocab_path);
  const std::string samples_text = read_file(config.samples_path);
  std::istringstream samples_in(samples_text);
  std::vector<pipeline::SampleRecord> records = pipeline::read_jsonl(samples_in);
  if (records.empty()) throw EmptyInputError("samples file holds no records");
  generate_missing(records, base, rl, tokenizer ? &*tokenizer : nullptr, config.max_new, config.eos);
  pipeline::grade(records, config.extractor);

  pipeline::FilterConfig filter = config.filter;
  filter.alpha = config.alphas.front();
  pipeline::FilterOutcome filtered = pipeline::apply_filters(std::move(records), filter);
  std::map<std::string, std::size_t> verdicts;
  for (const auto& r : filtered.records) ++verdicts[std::string(pipeline::to_string(r.verdict))];
  if (filtered.kept() == 0) throw EmptyInputError("no sample survives the filters");
  const double t_bar = *filtered.mean_length;
  log << "samples: " << filtered.records.size() << " read, " << filtered.kept() << " kept, mean length "
      << metrics::format_double(t_bar) << "\n";

  std::vector<pipeline::SampleRecord> kept;
  for (const auto& r : filtered.records) {
    if (r.verdict == pipeline::Verdict::kept) kept.push_back(r);
  }
  const std::vector<AttributionSample> base_samples = attribution_samples(kept, false);
  const std::vector<AttributionSample> rl_samples = attribution_samples(kept, true);

  const CircuitGraph graph = build_graph(base.config.n_layers);
  AttributionOptions opts;
  opts.acdc_fraction = config.acdc_fraction;

  std::vector<Section> sections;
  std::vector<std::pair<double, std::size_t>> t_cuts;
  for (double alpha : config.alphas) {
    Section sec;
    sec.alpha = alpha;
    sec.t_cut = pipeline::truncation_length(t_bar, alpha);
    for (const auto& r : kept) {
      if (std::min(r.base_length(), r.rl_length()) < sec.t_cut) {
        throw ConfigError("alpha " + metrics::format_double(alpha) + " gives T_cut " + std::to_string(sec.t_cut) +
                          ", longer than a generation of sample '" + r.id + "'; lower alpha or raise beta");
      }
    }
    t_cuts.emplace_back(alpha, sec.t_cut);
    log << "alpha " << metrics::format_double(alpha) << ": T_cut " << sec.t_cut << "\n";
    sec.base = attribute_dataset(base, graph, base_samples, sec.t_cut, config.method, config.jobs, opts);
    sec.rl = attribute_dataset(rl, graph, rl_samples, sec.t_cut, config.method, config.jobs, opts);

    const double shared = std::max(metrics::max_abs_score(sec.base, graph), metrics::max_abs_score(sec.rl, graph));
    sec.base_report =
        metrics::compute_report("base", config.dataset, alpha, sec.t_cut, sec.base, graph, config.metrics, shared);
    sec.rl_report =
        metrics::compute_report("rl", config.dataset, alpha, sec.t_cut, sec.rl, graph, config.metrics, shared);
    const std::vector<metrics::MetricsReport> b{sec.base_report}, r{sec.rl_report};
    sec.rows = metrics::build_comparison(b, r);
    sec.rel_change = metrics::relative_change(sec.base, sec.rl, graph, config.metrics.eps_rel);
    sections.push_back(std::move(sec));
  }

  // Everything is computed; render the artifacts.
  std::map<std::string, std::string> files;
  {
    std::ostringstream os;
    pipeline::write_jsonl(os, filtered.records, t_cuts);
    files["samples.jsonl"] = os.str();
  }

  ojson report;
  report["dataset"] = config.dataset;
  report["method"] = to_string(config.method);
  if (config.method == Method::acdc) report["ablation_fraction"] = config.acdc_fraction;
  report["precision"] = to_string(prec);
  report["extractor"] = to_string(config.extractor);
  report["filter"] = {{"alphas", config.alphas},
                      {"beta", config.filter.beta},
                      {"gamma", config.filter.gamma},
                      {"delta", config.filter.delta}};
  report["histogram"] = {{"bins", config.metrics.bins},
                         {"eps", config.metrics.eps},
                         {"range_policy", "shared_pair_max"},
                         {"log", "natural"}};
  report["relative_change_eps"] = config.metrics.eps_rel;
  report["mean_length"] = t_bar;
  report["n_records"] = filtered.records.size();
  report["n_kept"] = filtered.kept();
  report["verdicts"] = verdicts;
  report["edges"] = graph.edge_count();
  ojson secs = ojson::array();
  std::vector<metrics::ComparisonRow> all_rows;
  std::ostringstream node_csv, div_csv;
  node_csv << "alpha,model,source,entropy\n";
  div_csv << "alpha,model,diversity,pairs,skipped_samples\n";
  for (const Section& sec : sections) {
    ojson rows = ojson::array();
    for (const auto& row : sec.rows) {
      rows.push_back({{"metric", row.metric},
                      {"sft", optional_number(row.sft)},
                      {"rl", optional_number(row.rl)},
                      {"better", metrics::to_string(row.better)}});
    }
    secs.push_back({{"alpha", sec.alpha},
                    {"T_cut", sec.t_cut},
                    {"base", report_json(sec.base_report, graph)},
                    {"rl", report_json(sec.rl_report, graph)},
                    {"comparison", rows}});
    all_rows.insert(all_rows.end(), sec.rows.begin(), sec.rows.end());

    std::ostringstream rel;
    rel << "source,destination,relative_change\n";
    for (const Edge& e : graph.edges()) {
      rel << graph.source(e.source).name << ',' << graph.destination(e.destination).name << ','
          << metrics::format_double(sec.rel_change[e.source * graph.n_destinations() + e.destination]) << '\n';
    }
    files["figdata/relative_change_alpha_" + alpha_tag(sec.alpha) + ".csv"] = rel.str();
    for (const auto* rep : {&sec.base_report, &sec.rl_report}) {
      for (std::size_t s = 0; s < graph.n_sources(); ++s) {
        node_csv << metrics::format_double(sec.alpha) << ',' << rep->model << ',' << graph.source(s).name << ','
                 << metrics::format_double(rep->node_entropy.entropy[s]) << '\n';
      }
      div_csv << metrics::format_double(sec.alpha) << ',' << rep->model << ','
              << (rep->diversity.value ? metrics::format_double(*rep->diversity.value) : "") << ','
              << rep->diversity.pairs << ',' << rep->diversity.skipped_samples << '\n';
    }
  }
  report["sections"] = secs;
  files["report.json"] = report.dump(2) + "\n";
  files["table.csv"] = metrics::comparison_csv(all_rows);
  files["figdata/node_entropy.csv"] = node_csv.str();
  files["figdata/diversity.csv"] = div_csv.str();

  std::vector<std::pair<double, std::vector<EdgeScoreMatrix>>> base_by_alpha, rl_by_alpha;
  for (const Section& sec : sections) {
    base_by_alpha.emplace_back(sec.alpha, sec.base);
    rl_by_alpha.emplace_back(sec.alpha, sec.rl);
  }
  const io::ScoreFile base_scores =
      io::make_score_file("base", config.method, base_by_alpha, graph.n_sources(), graph.n_destinations());
  const io::ScoreFile rl_scores =
      io::make_score_file("rl", config.method, rl_by_alpha, graph.n_sources(), graph.n_destinations());

  const fs::path out(config.out_dir);
  std::error_code ec;
  fs::create_directories(out / "figdata", ec);
  if (ec) throw io::FormatError(io::FormatErrorCode::io, "cannot create '" + config.out_dir + "': " + ec.message());
  for (const auto& [name, text] : files) write_text(out / name, text);
  io::save_scores(base_scores, (out / "scores_base.csc").string());
  io::save_scores(rl_scores, (out / "scores_rl.csc").string());

  ojson outputs = ojson::object();
  for (const auto& [name, text] : files) outputs[name] = io::hex64(text_checksum(text));
  for (const char* name : {"scores_base.csc", "scores_base.csc.json", "scores_rl.csc", "scores_rl.csc.json"}) {
    outputs[name] = io::hex64(text_checksum(read_file((out / name).string())));
  }
  ojson manifest;
  manifest["tool"] = {{"name", "csc"}, {"version", kVersion}, {"container", "CSC1"}, {"compiler", __VERSION__}};
  manifest["inputs"] = {{"base", {{"path", config.base_path}, {"checksum", io::hex64(io::model_checksum(base))}}},
                        {"rl", {{"path", config.rl_path}, {"checksum", io::hex64(io::model_checksum(rl))}}},
                        {"samples", {{"path", config.samples_path}, {"checksum", io::hex64(text_checksum(samples_text))}}}};
  if (!config.vocab_path.empty()) {
    manifest["inputs"]["vocab"] = {{"path", config.vocab_path},
                                   {"checksum", io::hex64(text_checksum(read_file(config.vocab_path)))}};
  }
  manifest["config"] = {{"alphas", config.alphas},
                        {"beta", config.filter.beta},
                        {"gamma", config.filter.gamma},
                        {"delta", config.filter.delta},
                        {"method", to_string(config.method)},
                        {"ablation_fraction", config.acdc_fraction},
                        {"bins", config.metrics.bins},
                        {"eps", config.metrics.eps},
                        {"eps_rel", config.metrics.eps_rel},
                        {"seed", config.seed},
                        {"precision", to_string(prec)},
                        {"precision_from_env", env_precision.has_value()},
                        {"jobs", config.jobs},
                        {"max_new", config.max_new},
                        {"eos", config.eos ? ojson(*config.eos) : ojson(nullptr)},
                        {"extractor", to_string(config.extractor)},
                        {"dataset", config.dataset}};
  manifest["outputs"] = outputs;
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  log << "wrote " << out.string() << "\n";
}

int cmd_run(const RunConfig& config, std::ostream& log) {
  try {
    run(config, log);
    return ok;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  try {
    const ModelWeights w = io::load_model(path);
    out << "config: " << io::config_to_json(w.config).dump() << "\n";
    for (const auto& [name, sum] : io::tensor_checksums(w)) out << "tensor " << name << " " << io::hex64(sum) << "\n";
    out << "model checksum: " << io::hex64(io::model_checksum(w)) << "\n";
    out << "edges: " << build_graph(w.config.n_layers).edge_count() << "\n";
    return ok;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace csc::cli
