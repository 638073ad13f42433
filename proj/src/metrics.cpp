// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <sstream>

#include "csc/error.hpp"

namespace csc::metrics {

void MetricsConfig::validate() const {
  if (bins == 0) throw ConfigError("metrics: bins must be >= 1");
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("metrics: eps must be finite and >= 0");
  if (!(eps_rel >= 0.0) || !std::isfinite(eps_rel)) throw ConfigError("metrics: eps_rel must be finite and >= 0");
}

namespace {

void check_shapes(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph, std::string_view op) {
  if (matrices.empty()) throw EmptyInputError(std::string(op) + ": no matrices");
  for (const EdgeScoreMatrix& m : matrices) {
    if (m.n_sources != graph.n_sources() || m.n_destinations != graph.n_destinations() ||
        m.scores.size() != graph.n_sources() * graph.n_destinations()) {
      throw DimensionError(std::string(op) + ": matrix for sample '" + m.sample_id + "' is " +
                           std::to_string(m.n_sources) + "x" + std::to_string(m.n_destinations) +
                           ", graph needs " + std::to_string(graph.n_sources()) + "x" +
                           std::to_string(graph.n_destinations()));
    }
  }
}

std::vector<double> abs_pooled(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph) {
  std::vector<double> out;
  out.reserve(matrices.size() * graph.edge_count());
  for (const EdgeScoreMatrix& m : matrices) {
    for (const Edge& e : graph.edges()) out.push_back(std::fabs(m.at(e.source, e.destination)));
  }
  return out;
}

// Checked directly: a rounded mean can leave tiny nonzero deviations.
bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Neumaier summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::fabs(sum_) >= std::fabs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double shannon(std::span<const double> p) {
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

}  // namespace

double act_intensity(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph) {
  check_shapes(matrices, graph, "act_intensity");
  double sum = 0.0;
  for (const EdgeScoreMatrix& m : matrices) {
    for (const Edge& e : graph.edges()) sum += std::fabs(m.at(e.source, e.destination));
  }
  return sum / static_cast<double>(matrices.size() * graph.edge_count());
}

double max_abs_score(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph) {
  check_shapes(matrices, graph, "max_abs_score");
  double mx = 0.0;
  for (double v : abs_pooled(matrices, graph)) mx = std::max(mx, v);
  return mx;
}

EntropyResult histogram_entropy(std::span<const double> abs_values, std::size_t bins, double eps,
                                std::optional<double> range_max) {
  if (abs_values.empty()) throw EmptyInputError("info_complexity: no values");
  if (bins == 0) throw ConfigError("info_complexity: bins must be >= 1");
  double top = 0.0;
  for (double v : abs_values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError("info_complexity: values must be finite and >= 0");
    top = std::max(top, v);
  }
  if (range_max) {
    if (*range_max < top) throw RangeError("info_complexity: histogram range does not cover every value");
    top = *range_max;
  }
  EntropyResult r;
  r.range_max = top;
  if (top == 0.0) {
    r.degenerate = true;
    return r;
  }
  std::vector<std::size_t> counts(bins, 0);
  const double b = static_cast<double>(bins);
  for (double v : abs_values) {
    const auto k = static_cast<std::size_t>(std::floor(v / top * b));
    ++counts[std::min(k, bins - 1)];
  }
  // -p ln(p + eps) = p ln(1/p) - p log1p(eps/p); the split keeps the
  // uniform and one-bin cases within an ulp of ln B and -ln(1 + eps).
  const double total = static_cast<double>(abs_values.size());
  CompensatedSum plain, correction;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    plain.add(p * std::log(total / static_cast<double>(c)));
    correction.add(p * std::log1p(eps / p));
  }
  r.value = plain.value() - correction.value();
  return r;
}

EntropyResult info_complexity(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph,
                              std::size_t bins, double eps, std::optional<double> range_max) {
  check_shapes(matrices, graph, "info_complexity");
  const std::vector<double> pooled = abs_pooled(matrices, graph);
  return histogram_entropy(pooled, bins, eps, range_max);
}

std::optional<double> excess_kurtosis(std::span<const double> values) {
  if (values.empty()) throw EmptyInputError("kurtosis: no values");
  if (is_constant(values)) return std::nullopt;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  if (m2 == 0.0) return std::nullopt;
  return m4 / (m2 * m2) - 3.0;
}

KurtosisResult dist_kurtosis(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph) {
  check_shapes(matrices, graph, "dist_kurtosis");
  KurtosisResult r;
  double sum = 0.0;
  for (const EdgeScoreMatrix& m : matrices) {
    const std::vector<double> v = graph.valid_entries(m.scores);
    if (auto k = excess_kurtosis(v)) {
      sum += *k;
      ++r.used;
    } else {
      ++r.skipped;
    }
  }
  if (r.used > 0) r.value = sum / static_cast<double>(r.used);
  return r;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson: length mismatch");
  if (x.empty()) throw EmptyInputError("pearson: no values");
  if (is_constant(x) || is_constant(y)) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  // Deviations are scaled by their largest magnitude so squares neither
  // underflow nor overflow.
  double ax = 0.0, ay = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ax = std::max(ax, std::fabs(x[i] - mx));
    ay = std::max(ay, std::fabs(y[i] - my));
  }
  if (ax == 0.0 || ay == 0.0) return std::nullopt;
  double cxy = 0.0, cxx = 0.0, cyy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = (x[i] - mx) / ax, dy = (y[i] - my) / ay;
    cxy += dx * dy;
    cxx += dx * dx;
    cyy += dy * dy;
  }
  // sqrt(c * c) == c exactly, so x against itself or -x gives exactly +-1.
  const double r = cxy / std::sqrt(cxx * cyy);
  return std::clamp(r, -1.0, 1.0);
}

DiversityResult diversity_score(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph) {
  check_shapes(matrices, graph, "diversity_score");
  std::vector<std::vector<double>> vecs;
  DiversityResult r;
  for (const EdgeScoreMatrix& m : matrices) {
    std::vector<double> v = graph.valid_entries(m.scores);
    const bool flat = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    if (flat) {
      ++r.skipped_samples;
    } else {
      vecs.push_back(std::move(v));
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    for (std::size_t j = i + 1; j < vecs.size(); ++j) {
      // Non-constant vectors can still round to zero variance.
      if (auto c = pearson(vecs[i], vecs[j])) {
        sum += *c;
        ++r.pairs;
      }
    }
  }
  if (r.pairs > 0) r.value = 1.0 - sum / static_cast<double>(r.pairs);
  return r;
}

NodeEntropyResult node_output_entropy(std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph) {
  check_shapes(matrices, graph, "node_output_entropy");
  const std::size_t n_o = graph.n_sources(), n_i = graph.n_destinations();
  NodeEntropyResult r;
  r.entropy.assign(n_o, 0.0);
  r.skipped.assign(n_o, 0);
  for (std::size_t s = 0; s < n_o; ++s) {
    double sum_h = 0.0;
    std::size_t used = 0;
    for (const EdgeScoreMatrix& m : matrices) {
      std::vector<double> p;
      double total = 0.0;
      for (std::size_t d = s; d < n_i; ++d) {
        p.push_back(std::fabs(m.at(s, d)));
        total += p.back();
      }
      if (total == 0.0) {
        ++r.skipped[s];
        continue;
      }
      for (double& q : p) q /= total;
      sum_h += shannon(p);
      ++used;
    }
    if (used > 0) r.entropy[s] = sum_h / static_cast<double>(used);
  }
  return r;
}

std::vector<double> relative_change(std::span<const EdgeScoreMatrix> base, std::span<const EdgeScoreMatrix> rl,
                                    const CircuitGraph& graph, double eps_rel) {
  check_shapes(base, graph, "relative_change");
  check_shapes(rl, graph, "relative_change");
  const std::size_t n_i = graph.n_destinations();
  std::vector<double> out(graph.n_sources() * n_i, 0.0);
  auto mean_abs = [&](std::span<const EdgeScoreMatrix> ms, std::size_t s, std::size_t d) {
    double sum = 0.0;
    for (const EdgeScoreMatrix& m : ms) sum += std::fabs(m.at(s, d));
    return sum / static_cast<double>(ms.size());
  };
  for (const Edge& e : graph.edges()) {
    const double b = mean_abs(base, e.source, e.destination);
    const double r = mean_abs(rl, e.source, e.destination);
    out[e.source * n_i + e.destination] = (r - b) / (b + eps_rel);
  }
  return out;
}

MetricsReport compute_report(std::string model, std::string dataset, double alpha, std::size_t t_cut,
                             std::span<const EdgeScoreMatrix> matrices, const CircuitGraph& graph,
                             const MetricsConfig& config, std::optional<double> range_max) {
  config.validate();
  MetricsReport r;
  r.model = std::move(model);
  r.dataset = std::move(dataset);
  r.alpha = alpha;
  r.t_cut = t_cut;
  r.n_samples = matrices.size();
  r.act_intens = act_intensity(matrices, graph);
  r.info_complex = info_complexity(matrices, graph, config.bins, config.eps, range_max);
  r.dist_kurt = dist_kurtosis(matrices, graph);
  r.diversity = diversity_score(matrices, graph);
  r.node_entropy = node_output_entropy(matrices, graph);
  r.bins = config.bins;
  r.eps = config.eps;
  r.range_policy = range_max ? "shared_pair_max" : "own_max";
  return r;
}

std::string_view to_string(Better b) {
  switch (b) {
    case Better::sft: return "sft";
    case Better::rl: return "rl";
    case Better::tie: return "tie";
  }
  return "?";
}

bool higher_is_better(std::string_view metric) {
  if (metric == "act_intens" || metric == "info_complex") return true;
  if (metric == "dist_kurt") return false;
  throw ConfigError("unknown metric '" + std::string(metric) + "'");
}

Better compare_values(std::string_view metric, std::optional<double> sft, std::optional<double> rl) {
  const bool up = higher_is_better(metric);
  if (!sft || !rl || *sft == *rl) return Better::tie;
  return (*rl > *sft) == up ? Better::rl : Better::sft;
}

std::vector<ComparisonRow> build_comparison(std::span<const MetricsReport> base, std::span<const MetricsReport> rl) {
  if (base.size() != rl.size()) {
    throw ConfigError("build_comparison: " + std::to_string(base.size()) + " base reports vs " +
                      std::to_string(rl.size()) + " rl reports");
  }
  std::vector<ComparisonRow> rows;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const MetricsReport& b = base[i];
    const MetricsReport& r = rl[i];
    if (b.dataset != r.dataset || b.alpha != r.alpha) {
      throw ConfigError("build_comparison: key mismatch (" + b.dataset + ", " + format_double(b.alpha) + ") vs (" +
                        r.dataset + ", " + format_double(r.alpha) + ")");
    }
    auto add = [&](const char* metric, std::optional<double> sv, std::optional<double> rv) {
      rows.push_back({b.dataset, metric, b.alpha, sv, rv, compare_values(metric, sv, rv)});
    };
    add("act_intens", b.act_intens, r.act_intens);
    add("info_complex", b.info_complex.value, r.info_complex.value);
    add("dist_kurt", b.dist_kurt.value, r.dist_kurt.value);
  }
  return rows;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::ostringstream os;
  os << "dataset,metric,alpha,sft,rl,better\n";
  for (const ComparisonRow& r : rows) {
    os << r.dataset << ',' << r.metric << ',' << format_double(r.alpha) << ','
       << (r.sft ? format_double(*r.sft) : "") << ',' << (r.rl ? format_double(*r.rl) : "") << ','
       << to_string(r.better) << '\n';
  }
  return os.str();
}

}  // namespace csc::metrics
