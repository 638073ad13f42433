// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "csc/error.hpp"
#include "csc/metrics.hpp"
#include "csc/model_io.hpp"

namespace csc::metrics {
namespace {

// Matrix whose valid entries, in edge order, are `values`.
EdgeScoreMatrix from_edges(const CircuitGraph& g, const std::vector<double>& values, std::string id = "m") {
  EdgeScoreMatrix m;
  m.sample_id = std::move(id);
  m.n_sources = g.n_sources();
  m.n_destinations = g.n_destinations();
  m.scores.assign(m.n_sources * m.n_destinations, 0.0);
  for (const Edge& e : g.edges()) m.scores[e.source * m.n_destinations + e.destination] = values.at(e.id);
  return m;
}

EdgeScoreMatrix random_matrix(const CircuitGraph& g, io::Rng& rng, std::string id = "r") {
  std::vector<double> v(g.edge_count());
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return from_edges(g, v, std::move(id));
}

// Multiples of 1/64 whose |w| total is divisible by the odd part of
// samples * edges, so the mean |w| and its scalings below are exact.
std::vector<EdgeScoreMatrix> dyadic_matrices(const CircuitGraph& g, io::Rng& rng, std::size_t count) {
  std::vector<std::vector<int>> ks(count, std::vector<int>(g.edge_count()));
  std::size_t total = 0;
  for (auto& k : ks) {
    for (int& x : k) {
      x = static_cast<int>(rng.next() % 129) - 64;
      total += static_cast<std::size_t>(std::abs(x));
    }
  }
  std::size_t odd = count * g.edge_count();
  while (odd % 2 == 0) odd /= 2;
  int& last = ks.back().back();
  const int pad = static_cast<int>((odd - total % odd) % odd);
  last = last < 0 ? last - pad : last + pad;
  std::vector<EdgeScoreMatrix> out;
  for (const auto& k : ks) {
    std::vector<double> v(k.begin(), k.end());
    for (double& x : v) x /= 64.0;
    out.push_back(from_edges(g, v));
  }
  return out;
}

EdgeScoreMatrix scaled(EdgeScoreMatrix m, double a, double b = 0.0, const CircuitGraph* g = nullptr) {
  for (std::size_t s = 0; s < m.n_sources; ++s) {
    for (std::size_t d = 0; d < m.n_destinations; ++d) {
      double& x = m.scores[s * m.n_destinations + d];
      if (!g || g->is_valid(s, d)) x = a * x + b;
    }
  }
  return m;
}

// One value at each bin centre of [0, 1].
std::vector<double> uniform_values(std::size_t bins) {
  std::vector<double> v;
  for (std::size_t k = 0; k < bins; ++k) v.push_back((static_cast<double>(k) + 0.5) / static_cast<double>(bins));
  return v;
}

TEST(ActIntensity, Examples) {
  const CircuitGraph g = build_graph(2);
  const std::vector<EdgeScoreMatrix> ones{from_edges(g, std::vector<double>(15, 1.0))};
  EXPECT_EQ(act_intensity(ones, g), 1.0);
  std::vector<double> pm(15);
  for (std::size_t i = 0; i < 15; ++i) pm[i] = i % 2 ? 2.0 : -2.0;
  const std::vector<EdgeScoreMatrix> two{from_edges(g, pm)};
  EXPECT_EQ(act_intensity(two, g), 2.0);
  // Masked entries never count.
  std::vector<EdgeScoreMatrix> noisy = ones;
  noisy[0].scores[4 * 5 + 0] = 1000.0;
  EXPECT_EQ(act_intensity(noisy, g), 1.0);
}

TEST(ActIntensity, PositiveHomogeneity) {
  const CircuitGraph g = build_graph(3);
  io::Rng rng(1);
  const std::vector<EdgeScoreMatrix> exact = dyadic_matrices(g, rng, 3);
  for (double c : {0.5, 0.75, 2.0, 3.0}) {
    std::vector<EdgeScoreMatrix> s;
    for (const auto& m : exact) s.push_back(scaled(m, c));
    EXPECT_EQ(act_intensity(s, g), c * act_intensity(exact, g));
  }
  std::vector<EdgeScoreMatrix> rnd{random_matrix(g, rng), random_matrix(g, rng)};
  for (double c : {1e-3, 0.3, 7.1}) {
    std::vector<EdgeScoreMatrix> s;
    for (const auto& m : rnd) s.push_back(scaled(m, c));
    EXPECT_NEAR(act_intensity(s, g), c * act_intensity(rnd, g), 1e-15 * c);
  }
}

TEST(ActIntensity, Errors) {
  const CircuitGraph g = build_graph(2);
  EXPECT_THROW(act_intensity(std::vector<EdgeScoreMatrix>{}, g), EmptyInputError);
  io::Rng rng(2);
  const std::vector<EdgeScoreMatrix> wrong{random_matrix(build_graph(3), rng)};
  EXPECT_THROW(act_intensity(wrong, g), DimensionError);
}

TEST(InfoComplexity, HistogramExamples) {
  EXPECT_LT(std::fabs(histogram_entropy(std::vector<double>(50, 0.3), 256, 1e-12).value), 1e-9);
  EXPECT_NEAR(histogram_entropy(std::vector<double>(50, 0.3), 256, 1e-12).value, -std::log1p(1e-12), 1e-20);
  for (std::size_t b : {2u, 256u}) {
    const double h = histogram_entropy(uniform_values(b), b, 1e-12, 1.0).value;
    EXPECT_LE(std::fabs(h - std::log(static_cast<double>(b))), static_cast<double>(b) * 1e-12);
  }
  const EntropyResult split = histogram_entropy(std::vector<double>{0.1, 0.2, 0.3, 1.0}, 2, 1e-12);
  EXPECT_NEAR(split.value, -(0.75 * std::log(0.75) + 0.25 * std::log(0.25)), 1e-11);
  EXPECT_NEAR(split.value, 0.56233, 1e-5);
  EXPECT_EQ(split.range_max, 1.0);
}

// For some B (16, 32, 64, 100, ...) B * eps falls past the midpoint between
// two doubles near ln B, so no rounding of the entropy lands inside the
// bound; the sweep checks the exact expression instead.
TEST(InfoComplexity, UniformHistogramSweep) {
  for (std::size_t b = 1; b <= 300; ++b) {
    const double lb = std::log(static_cast<double>(b));
    const double expected = lb - std::log1p(static_cast<double>(b) * 1e-12);
    const double h = histogram_entropy(uniform_values(b), b, 1e-12, 1.0).value;
    EXPECT_LE(std::fabs(h - expected), 2.0 * std::nextafter(std::max(lb, 1.0), 10.0) - 2.0 * std::max(lb, 1.0))
        << "B=" << b;
  }
}

TEST(InfoComplexity, DegenerateAndErrors) {
  const EntropyResult zero = histogram_entropy(std::vector<double>(5, 0.0), 8, 1e-12);
  EXPECT_TRUE(zero.degenerate);
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_THROW(histogram_entropy(std::vector<double>{}, 8, 1e-12), EmptyInputError);
  EXPECT_THROW(histogram_entropy(std::vector<double>{-1.0}, 8, 1e-12), NumericError);
  EXPECT_THROW(histogram_entropy(std::vector<double>{2.0}, 8, 1e-12, 1.0), RangeError);
  EXPECT_THROW(histogram_entropy(std::vector<double>{2.0}, 0, 1e-12), ConfigError);
}

TEST(InfoComplexity, PoolsValidEntriesOfAllSamples) {
  const CircuitGraph g = build_graph(1);
  const std::vector<EdgeScoreMatrix> ms{from_edges(g, {1, -1, 1, 1, 1, 1}), from_edges(g, {-0.1, 0.1, 0.1, 1, 1, 1})};
  // 12 values, 3 below the midpoint.
  const EntropyResult r = info_complexity(ms, g, 2, 1e-12);
  EXPECT_NEAR(r.value, -(0.75 * std::log(0.75) + 0.25 * std::log(0.25)), 1e-11);
  const EntropyResult wide = info_complexity(ms, g, 2, 1e-12, 4.0);
  EXPECT_EQ(wide.range_max, 4.0);
  EXPECT_NEAR(wide.value, 0.0, 1e-11);
}

TEST(Kurtosis, Identities) {
  std::vector<double> rademacher;
  for (int i = 0; i < 64; ++i) rademacher.push_back(i % 2 ? 1.0 : -1.0);
  EXPECT_NEAR(*excess_kurtosis(rademacher), -2.0, 1e-9);
  EXPECT_FALSE(excess_kurtosis(std::vector<double>(10, 3.0)).has_value());
  EXPECT_THROW(excess_kurtosis(std::vector<double>{}), EmptyInputError);

  const CircuitGraph g = build_graph(1);
  const std::vector<EdgeScoreMatrix> ms{from_edges(g, {1, -1, 1, -1, 1, -1}), from_edges(g, std::vector<double>(6, 2.0))};
  const KurtosisResult k = dist_kurtosis(ms, g);
  EXPECT_NEAR(*k.value, -2.0, 1e-9);
  EXPECT_EQ(k.used, 1u);
  EXPECT_EQ(k.skipped, 1u);
  const std::vector<EdgeScoreMatrix> flat{ms[1]};
  EXPECT_FALSE(dist_kurtosis(flat, g).value.has_value());
}

TEST(Kurtosis, AffineInvariance) {
  io::Rng rng(3);
  // 32 integers: the mean and every moment below are exact in binary.
  std::vector<double> x(32);
  for (double& v : x) v = static_cast<double>(static_cast<int>(rng.next() % 21) - 10);
  const double k0 = *excess_kurtosis(x);
  for (auto [a, b] : {std::pair{2.0, 3.0}, std::pair{-0.5, 7.0}, std::pair{-4.0, -1.0}}) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = a * x[i] + b;
    EXPECT_EQ(*excess_kurtosis(y), k0);
  }
  std::vector<double> r(1000);
  for (double& v : r) v = rng.uniform(-1.0, 1.0);
  const double kr = *excess_kurtosis(r);
  for (auto [a, b] : {std::pair{3.7, 0.2}, std::pair{-0.01, 5.0}}) {
    std::vector<double> y(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) y[i] = a * r[i] + b;
    EXPECT_NEAR(*excess_kurtosis(y), kr, 1e-10);
  }
}

TEST(Kurtosis, StandardNormalNearZero) {
  io::Rng rng(4);
  std::vector<double> v(100000);
  for (double& x : v) x = rng.normal();
  EXPECT_NEAR(*excess_kurtosis(v), 0.0, 0.1);
}

double brute_diversity(const std::vector<std::vector<double>>& v) {
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double n = static_cast<double>(v[i].size());
      double mi = 0, mj = 0;
      for (std::size_t k = 0; k < v[i].size(); ++k) {
        mi += v[i][k] / n;
        mj += v[j][k] / n;
      }
      double c = 0, a = 0, b = 0;
      for (std::size_t k = 0; k < v[i].size(); ++k) {
        c += (v[i][k] - mi) * (v[j][k] - mj);
        a += (v[i][k] - mi) * (v[i][k] - mi);
        b += (v[j][k] - mj) * (v[j][k] - mj);
      }
      sum += c / std::sqrt(a * b);
      ++pairs;
    }
  }
  return 1.0 - sum / pairs;
}

TEST(Diversity, Identities) {
  const CircuitGraph g = build_graph(2);
  io::Rng rng(5);
  const EdgeScoreMatrix w = random_matrix(g, rng);
  const std::vector<EdgeScoreMatrix> same{w, w, w};
  EXPECT_EQ(*diversity_score(same, g).value, 0.0);
  EXPECT_EQ(diversity_score(same, g).pairs, 3u);
  const std::vector<EdgeScoreMatrix> opposite{w, scaled(w, -1.0)};
  EXPECT_EQ(*diversity_score(opposite, g).value, 2.0);
  const std::vector<EdgeScoreMatrix> single{w};
  EXPECT_FALSE(diversity_score(single, g).value.has_value());
}

TEST(Diversity, MatchesBruteForceAndIgnoresAffineRescaling) {
  const CircuitGraph g = build_graph(2);
  io::Rng rng(6);
  std::vector<EdgeScoreMatrix> ms{random_matrix(g, rng), random_matrix(g, rng), random_matrix(g, rng)};
  std::vector<std::vector<double>> flat;
  for (const auto& m : ms) flat.push_back(g.valid_entries(m.scores));
  const double d = *diversity_score(ms, g).value;
  EXPECT_NEAR(d, brute_diversity(flat), 1e-12);
  std::vector<EdgeScoreMatrix> rescaled{scaled(ms[0], 3.0, 1.0, &g), scaled(ms[1], 0.2, -4.0, &g), ms[2]};
  EXPECT_NEAR(*diversity_score(rescaled, g).value, d, 1e-12);
}

TEST(Diversity, SkipsConstantSamples) {
  const CircuitGraph g = build_graph(1);
  io::Rng rng(7);
  const std::vector<EdgeScoreMatrix> ms{random_matrix(g, rng), from_edges(g, std::vector<double>(6, 1.0)),
                                        random_matrix(g, rng)};
  const DiversityResult r = diversity_score(ms, g);
  EXPECT_EQ(r.pairs, 1u);
  EXPECT_EQ(r.skipped_samples, 1u);
  const std::vector<EdgeScoreMatrix> pair{ms[0], ms[2]};
  EXPECT_EQ(*r.value, *diversity_score(pair, g).value);
}

TEST(Pearson, Basics) {
  EXPECT_EQ(*pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0);
  EXPECT_FALSE(pearson(std::vector<double>{1, 1}, std::vector<double>{1, 2}).has_value());
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
  const std::vector<double> tiny{1e-200, 2e-200, 4e-200}, huge{1e200, -3e200, 4e200};
  EXPECT_EQ(*pearson(tiny, tiny), 1.0);
  EXPECT_EQ(*pearson(huge, huge), 1.0);
  EXPECT_NEAR(*pearson(tiny, std::vector<double>{1, 2, 4}), 1.0, 1e-15);
  // The mean of three 0.1s rounds; the sample is still constant.
  EXPECT_FALSE(pearson(std::vector<double>(3, 0.1), std::vector<double>{1, 2, 3}).has_value());
  EXPECT_FALSE(excess_kurtosis(std::vector<double>(3, 0.1)).has_value());
}

TEST(NodeEntropy, Examples) {
  const CircuitGraph g = build_graph(2);
  const std::vector<EdgeScoreMatrix> uniform{from_edges(g, std::vector<double>(15, -0.25))};
  const NodeEntropyResult r = node_output_entropy(uniform, g);
  ASSERT_EQ(r.entropy.size(), 5u);
  for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(r.entropy[s], std::log(5.0 - static_cast<double>(s)), 1e-14);
  EXPECT_EQ(r.entropy[4], 0.0);

  io::Rng rng(8);
  const std::vector<EdgeScoreMatrix> ms{random_matrix(g, rng), random_matrix(g, rng), from_edges(g, std::vector<double>(15, 0.0))};
  const NodeEntropyResult got = node_output_entropy(ms, g);
  for (std::size_t s = 0; s < 5; ++s) {
    double mean = 0.0;
    for (int k = 0; k < 2; ++k) {
      double total = 0.0, h = 0.0;
      for (std::size_t d = s; d < 5; ++d) total += std::fabs(ms[k].at(s, d));
      for (std::size_t d = s; d < 5; ++d) {
        const double p = std::fabs(ms[k].at(s, d)) / total;
        if (p > 0) h -= p * std::log(p);
      }
      mean += h / 2.0;
    }
    EXPECT_NEAR(got.entropy[s], mean, 1e-12);
    EXPECT_EQ(got.skipped[s], 1u);
  }
}

TEST(RelativeChange, Examples) {
  const CircuitGraph g = build_graph(2);
  io::Rng rng(9);
  const std::vector<EdgeScoreMatrix> base{random_matrix(g, rng), random_matrix(g, rng)};
  for (double v : relative_change(base, base, g, 1e-12)) EXPECT_EQ(v, 0.0);
  const std::vector<EdgeScoreMatrix> doubled{scaled(base[0], -2.0), scaled(base[1], 2.0)};
  const std::vector<double> rc = relative_change(base, doubled, g, 1e-12);
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t d = 0; d < 5; ++d) {
      if (g.is_valid(s, d)) {
        EXPECT_NEAR(rc[s * 5 + d], 1.0, 1e-9);
      } else {
        EXPECT_EQ(rc[s * 5 + d], 0.0);
      }
    }
  }
  const std::vector<EdgeScoreMatrix> zero{from_edges(g, std::vector<double>(15, 0.0))};
  const std::vector<EdgeScoreMatrix> one{from_edges(g, std::vector<double>(15, 1.0))};
  for (double v : g.valid_entries(relative_change(zero, one, g, 1e-12))) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 1e11);
  }
  EXPECT_THROW(relative_change(zero, std::vector<EdgeScoreMatrix>{}, g, 1e-12), EmptyInputError);
}

MetricsReport report(double act, std::optional<double> info, std::optional<double> kurt, double alpha = 0.03,
                     std::string dataset = "MATH") {
  MetricsReport r;
  r.dataset = std::move(dataset);
  r.alpha = alpha;
  r.act_intens = act;
  r.info_complex.value = info.value_or(0.0);
  r.dist_kurt.value = kurt;
  return r;
}

TEST(Comparison, DirectionArrows) {
  EXPECT_TRUE(higher_is_better("act_intens"));
  EXPECT_TRUE(higher_is_better("info_complex"));
  EXPECT_FALSE(higher_is_better("dist_kurt"));
  EXPECT_THROW(higher_is_better("speed"), ConfigError);
  EXPECT_EQ(compare_values("act_intens", 2.29e-3, 2.64e-3), Better::rl);
  EXPECT_EQ(compare_values("dist_kurt", 3.93e2, 2.53e2), Better::rl);
  EXPECT_EQ(compare_values("dist_kurt", 2.53e2, 3.93e2), Better::sft);
  EXPECT_EQ(compare_values("info_complex", 1.5, 1.5), Better::tie);
  EXPECT_EQ(compare_values("act_intens", std::nullopt, 1.0), Better::tie);
}

TEST(Comparison, RowsAndCsv) {
  const std::vector<MetricsReport> base{report(2.29e-3, 4.0, 3.93e2), report(1.0, 2.0, std::nullopt, 0.1)};
  const std::vector<MetricsReport> rl{report(2.64e-3, 3.5, 2.53e2), report(1.0, 2.0, 1.0, 0.1)};
  const std::vector<ComparisonRow> rows = build_comparison(base, rl);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].metric, "act_intens");
  EXPECT_EQ(rows[0].better, Better::rl);
  EXPECT_EQ(rows[1].better, Better::sft);
  EXPECT_EQ(rows[2].better, Better::rl);
  EXPECT_EQ(rows[3].better, Better::tie);
  EXPECT_EQ(rows[5].better, Better::tie);
  EXPECT_EQ(comparison_csv(std::span(rows).first(1)),
            "dataset,metric,alpha,sft,rl,better\nMATH,act_intens,0.03,0.00229,0.00264,rl\n");
  EXPECT_EQ(comparison_csv(std::span(rows).subspan(5)), "dataset,metric,alpha,sft,rl,better\nMATH,dist_kurt,0.1,,1,tie\n");

  const std::vector<MetricsReport> other{report(1.0, 1.0, 1.0, 0.5), report(1.0, 1.0, 1.0, 0.1)};
  EXPECT_THROW(build_comparison(base, other), ConfigError);
  EXPECT_THROW(build_comparison(base, std::span(rl).first(1)), ConfigError);
  const std::vector<MetricsReport> gsm{report(1.0, 1.0, 1.0, 0.03, "GSM8K"), report(1.0, 1.0, 1.0, 0.1)};
  EXPECT_THROW(build_comparison(base, gsm), ConfigError);
}

TEST(Report, CollectsEveryStatistic) {
  const CircuitGraph g = build_graph(2);
  io::Rng rng(10);
  const std::vector<EdgeScoreMatrix> ms{random_matrix(g, rng), random_matrix(g, rng)};
  MetricsConfig c;
  c.bins = 16;
  const MetricsReport r = compute_report("base", "toy", 0.1, 3, ms, g, c, std::nullopt);
  EXPECT_EQ(r.n_samples, 2u);
  EXPECT_EQ(r.t_cut, 3u);
  EXPECT_EQ(r.act_intens, act_intensity(ms, g));
  EXPECT_EQ(r.info_complex.value, info_complexity(ms, g, 16, c.eps).value);
  EXPECT_EQ(r.range_policy, "own_max");
  EXPECT_EQ(compute_report("b", "t", 0.1, 3, ms, g, c, 10.0).range_policy, "shared_pair_max");
  c.bins = 0;
  EXPECT_THROW(compute_report("b", "t", 0.1, 3, ms, g, c, std::nullopt), ConfigError);
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(2.5e-7), "2.5e-07");
}

}  // namespace
}  // namespace csc::metrics
