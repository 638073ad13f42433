// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace csc::test {

Tensor random_tensor(const Shape& shape, io::Rng& rng, double scale) {
  Tensor t(shape);
  for (double& v : t.data()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

Tensor numeric_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, const Tensor& r, double h) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = dot(r, f(probe));
    probe[i] = x[i] - h;
    const double down = dot(r, f(probe));
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

ModelConfig small_config(std::size_t n_layers) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = 16;
  c.d_ff = 32;
  c.n_heads = 2;
  c.d_query = 8;
  c.d_attn = 16;
  c.vocab_size = 11;
  c.max_positions = 32;
  return c;
}

std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, io::Rng& rng) {
  std::vector<TokenId> out(n);
  for (auto& t : out) t = static_cast<TokenId>(rng.next() % vocab);
  return out;
}

AttributionSample random_sample(const std::string& id, std::size_t prompt_len, std::size_t gen_len,
                                std::size_t vocab, io::Rng& rng) {
  return {id, random_tokens(prompt_len, vocab, rng), random_tokens(gen_len, vocab, rng)};
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("csc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::filesystem::path fixture_dir() { return CSC_FIXTURE_DIR; }

namespace {

using Mat = std::vector<std::vector<double>>;

Mat as_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) m[i][j] = t.at(i, j);
  }
  return m;
}

Mat product(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  }
  return c;
}

Mat norm_rows(const Mat& x, const ModelConfig& c, const Tensor& gain, const Tensor& bias) {
  Mat y = x;
  for (std::size_t p = 0; p < x.size(); ++p) {
    const double n = static_cast<double>(x[p].size());
    double mean = 0.0;
    if (c.norm == NormKind::layernorm) {
      for (double v : x[p]) mean += v;
      mean /= n;
    }
    double sq = 0.0;
    for (double v : x[p]) sq += (v - mean) * (v - mean);
    const double denom = std::sqrt(sq / n + c.norm_eps);
    for (std::size_t i = 0; i < x[p].size(); ++i) {
      y[p][i] = (x[p][i] - mean) / denom * gain[i];
      if (c.norm == NormKind::layernorm) y[p][i] += bias[i];
    }
  }
  return y;
}

double act(double v, Activation a) {
  if (a == Activation::silu) return v / (1.0 + std::exp(-v));
  return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
}

void rope(Mat& x, std::size_t heads, double base) {
  const std::size_t hd = x[0].size() / heads;
  for (std::size_t p = 0; p < x.size(); ++p) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; 2 * i < hd; ++i) {
        const double theta = static_cast<double>(p) / std::pow(base, 2.0 * static_cast<double>(i) / static_cast<double>(hd));
        double& a = x[p][h * hd + 2 * i];
        double& b = x[p][h * hd + 2 * i + 1];
        const double a0 = a, b0 = b;
        a = a0 * std::cos(theta) - b0 * std::sin(theta);
        b = a0 * std::sin(theta) + b0 * std::cos(theta);
      }
    }
  }
}

}  // namespace

Tensor reference_logits(const ModelWeights& w, const std::vector<TokenId>& tokens,
                        std::optional<EdgeAblation> ablation) {
  const ModelConfig& c = w.config;
  const std::size_t n = tokens.size();
  const Mat emb = as_mat(w.token_embedding);
  Mat h(n);
  for (std::size_t p = 0; p < n; ++p) {
    h[p] = emb[tokens[p]];
    if (c.positional == PositionalEncoding::learned_absolute) {
      for (std::size_t i = 0; i < c.d_model; ++i) h[p][i] += w.position_embedding.at(p, i);
    }
  }
  std::vector<Mat> outputs{h};
  auto read = [&](std::size_t dest) {
    Mat r = h;
    if (ablation && ablation->destination == dest) {
      const Mat& o = outputs.at(ablation->source);
      for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i < c.d_model; ++i) r[p][i] -= ablation->fraction * o[p][i];
      }
    }
    return r;
  };
  const std::size_t hq = c.d_query, hv = c.d_attn / c.n_heads;
  std::size_t dest = 0;
  for (const LayerWeights& l : w.layers) {
    const Mat x = norm_rows(read(dest++), c, l.attn_norm_gain, l.attn_norm_bias);
    Mat q = product(x, as_mat(l.w_q)), k = product(x, as_mat(l.w_k));
    const Mat v = product(x, as_mat(l.w_v));
    if (c.positional == PositionalEncoding::rotary) {
      rope(q, c.n_heads, c.rope_base);
      rope(k, c.n_heads, c.rope_base);
    }
    Mat ctx(n, std::vector<double>(c.d_attn, 0.0));
    for (std::size_t hd = 0; hd < c.n_heads; ++hd) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(i + 1);
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          double d = 0.0;
          for (std::size_t e = 0; e < hq; ++e) d += q[i][hd * hq + e] * k[j][hd * hq + e];
          s[j] = d / std::sqrt(static_cast<double>(hq));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& sj : s) z += (sj = std::exp(sj - mx));
        for (std::size_t j = 0; j <= i; ++j) {
          for (std::size_t e = 0; e < hv; ++e) ctx[i][hd * hv + e] += s[j] / z * v[j][hd * hv + e];
        }
      }
    }
    const Mat o_attn = product(ctx, as_mat(l.w_o));
    outputs.push_back(o_attn);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t i = 0; i < c.d_model; ++i) h[p][i] += o_attn[p][i];
    }

    const Mat y = norm_rows(read(dest++), c, l.ffn_norm_gain, l.ffn_norm_bias);
    const Mat gate = product(y, as_mat(l.w_gate)), up = product(y, as_mat(l.w_up));
    Mat mid(n, std::vector<double>(c.d_ff));
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t i = 0; i < c.d_ff; ++i) mid[p][i] = act(gate[p][i], c.activation) * up[p][i];
    }
    const Mat o_ffn = product(mid, as_mat(l.w_down));
    outputs.push_back(o_ffn);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t i = 0; i < c.d_model; ++i) h[p][i] += o_ffn[p][i];
    }
  }
  const Mat f = norm_rows(read(dest), c, w.final_norm_gain, w.final_norm_bias);
  Tensor logits({n, c.vocab_size});
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t t = 0; t < c.vocab_size; ++t) {
      double s = 0.0;
      for (std::size_t i = 0; i < c.d_model; ++i) s += f[p][i] * emb[t][i];
      logits.at(p, t) = s;
    }
  }
  return logits;
}

}  // namespace csc::test
