// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "csc/error.hpp"

namespace csc::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_rank_at_least(const Tensor& x, std::size_t r, const char* op) {
  if (x.rank() < r) {
    throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(r) + ", got " +
                         shape_string(x.shape()));
  }
}

Shape leading(const Shape& s, std::size_t keep_back) { return Shape(s.begin(), s.end() - static_cast<long>(keep_back)); }

// Resolves the batch layout of a matmul; throws on disagreement.
struct MatmulDims {
  std::size_t batch, m, k, n;
  bool broadcast_b;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  require_rank_at_least(a, 2, "matmul");
  require_rank_at_least(b, 2, "matmul");
  MatmulDims d{};
  d.m = a.dim(-2);
  d.k = a.dim(-1);
  d.n = b.dim(-1);
  if (b.dim(-2) != d.k) {
    throw DimensionError("matmul: inner extents disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  d.batch = shape_numel(leading(a.shape(), 2));
  d.broadcast_b = b.rank() == 2;
  if (!d.broadcast_b && leading(a.shape(), 2) != leading(b.shape(), 2)) {
    throw DimensionError("matmul: batch extents disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  return d;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

struct AxisLayout {
  std::size_t outer, len, inner;
};

AxisLayout axis_layout(const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("softmax: axis out of range for " + shape_string(x.shape()));
  AxisLayout l{1, x.shape()[static_cast<std::size_t>(a)], 1};
  for (int i = 0; i < a; ++i) l.outer *= x.shape()[static_cast<std::size_t>(i)];
  for (int i = a + 1; i < r; ++i) l.inner *= x.shape()[static_cast<std::size_t>(i)];
  return l;
}

void check_norm_params(const Tensor& x, NormKind kind, std::span<const double> gain, std::span<const double> bias) {
  require_rank_at_least(x, 1, "normalize");
  const std::size_t d = x.dim(-1);
  if (gain.size() != d) throw DimensionError("normalize: gain has " + std::to_string(gain.size()) + " entries, need " + std::to_string(d));
  if (!bias.empty() && bias.size() != d) throw DimensionError("normalize: bias extent mismatch");
  if (kind == NormKind::rmsnorm && !bias.empty()) throw DimensionError("normalize: rmsnorm takes no bias");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b);
  Shape out_shape = leading(a.shape(), 2);
  out_shape.push_back(d.m);
  out_shape.push_back(d.n);
  Tensor out(out_shape);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    const double* ab = pa + bi * d.m * d.k;
    const double* bb = d.broadcast_b ? pb : pb + bi * d.k * d.n;
    double* ob = po + bi * d.m * d.n;
    for (std::size_t i = 0; i < d.m; ++i) {
      for (std::size_t p = 0; p < d.k; ++p) {
        const double av = ab[i * d.k + p];
        for (std::size_t j = 0; j < d.n; ++j) ob[i * d.n + j] += av * bb[p * d.n + j];
      }
    }
  }
  finalize(out, "matmul");
  return out;
}

MatmulGrads matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& g) {
  const MatmulDims d = matmul_dims(a, b);
  if (g.size() != d.batch * d.m * d.n) throw DimensionError("matmul_vjp: upstream gradient has wrong size");
  MatmulGrads grads{Tensor(a.shape()), Tensor(b.shape())};
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  const double* pg = g.data().data();
  double* ga = grads.a.data().data();
  double* gb = grads.b.data().data();
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    const double* ab = pa + bi * d.m * d.k;
    const double* bb = d.broadcast_b ? pb : pb + bi * d.k * d.n;
    const double* gg = pg + bi * d.m * d.n;
    double* gab = ga + bi * d.m * d.k;
    double* gbb = d.broadcast_b ? gb : gb + bi * d.k * d.n;
    // dA = G B^T
    for (std::size_t i = 0; i < d.m; ++i) {
      for (std::size_t p = 0; p < d.k; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < d.n; ++j) s += gg[i * d.n + j] * bb[p * d.n + j];
        gab[i * d.k + p] = s;
      }
    }
    // dB = A^T G
    for (std::size_t i = 0; i < d.m; ++i) {
      for (std::size_t p = 0; p < d.k; ++p) {
        const double av = ab[i * d.k + p];
        for (std::size_t j = 0; j < d.n; ++j) gbb[p * d.n + j] += av * gg[i * d.n + j];
      }
    }
  }
  finalize(grads.a, "matmul_vjp");
  finalize(grads.b, "matmul_vjp");
  return grads;
}

Tensor transpose(const Tensor& x) {
  require_rank_at_least(x, 2, "transpose");
  const std::size_t rows = x.dim(-2);
  const std::size_t cols = x.dim(-1);
  Shape s = x.shape();
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  Tensor out(s);
  const std::size_t batch = x.size() / (rows * cols);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * rows * cols;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[base + j * rows + i] = x[base + i * cols + j];
  }
  finalize(out, "transpose");
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  finalize(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  finalize(out, "sub");
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  finalize(out, "mul");
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * c;
  finalize(out, "scale");
  return out;
}

MulGrads mul_vjp(const Tensor& a, const Tensor& b, const Tensor& g) {
  require_same_shape(a, b, "mul_vjp");
  require_same_shape(a, g, "mul_vjp");
  return {mul(g, b), mul(g, a)};
}

Tensor activate(Activation kind, const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    out[i] = kind == Activation::silu ? v * sigmoid(v) : v * normal_cdf(v);
  }
  finalize(out, kind == Activation::silu ? "silu" : "gelu");
  return out;
}

Tensor activate_vjp(Activation kind, const Tensor& x, const Tensor& g) {
  require_same_shape(x, g, "activate_vjp");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    double d;
    if (kind == Activation::silu) {
      const double s = sigmoid(v);
      d = s * (1.0 + v * (1.0 - s));
    } else {
      d = normal_cdf(v) + v * normal_pdf(v);
    }
    out[i] = g[i] * d;
  }
  finalize(out, "activate_vjp");
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const AxisLayout l = axis_layout(x, axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      double m = x[base];
      for (std::size_t j = 1; j < l.len; ++j) m = std::max(m, x[base + j * l.inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) {
        const double e = std::exp(x[base + j * l.inner] - m);
        out[base + j * l.inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < l.len; ++j) out[base + j * l.inner] /= s;
    }
  }
  finalize(out, "softmax");
  return out;
}

Tensor softmax_vjp(const Tensor& y, const Tensor& g, int axis) {
  require_same_shape(y, g, "softmax_vjp");
  const AxisLayout l = axis_layout(y, axis);
  Tensor out(y.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      double s = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) s += g[base + j * l.inner] * y[base + j * l.inner];
      for (std::size_t j = 0; j < l.len; ++j) {
        const std::size_t idx = base + j * l.inner;
        out[idx] = y[idx] * (g[idx] - s);
      }
    }
  }
  finalize(out, "softmax_vjp");
  return out;
}

Tensor causal_softmax(const Tensor& x) {
  require_rank_at_least(x, 2, "causal_softmax");
  const std::size_t rows = x.dim(-2);
  const std::size_t cols = x.dim(-1);
  const std::size_t batch = x.size() / (rows * cols);
  Tensor out(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t base = (b * rows + i) * cols;
      const std::size_t visible = std::min(i + 1, cols);
      double m = x[base];
      for (std::size_t j = 1; j < visible; ++j) m = std::max(m, x[base + j]);
      double s = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        const double e = std::exp(x[base + j] - m);
        out[base + j] = e;
        s += e;
      }
      for (std::size_t j = 0; j < visible; ++j) out[base + j] /= s;
    }
  }
  finalize(out, "causal_softmax");
  return out;
}

Tensor causal_softmax_vjp(const Tensor& y, const Tensor& g) {
  // Masked entries have y == 0, so the dense softmax VJP already zeroes them.
  return softmax_vjp(y, g, -1);
}

Tensor causal_mean(const Tensor& x) {
  require_rank_at_least(x, 2, "causal_mean");
  const std::size_t rows = x.dim(-2);
  const std::size_t cols = x.dim(-1);
  const std::size_t batch = x.size() / (rows * cols);
  Tensor out(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * rows * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        s += x[base + i * cols + c];
        out[base + i * cols + c] = s / static_cast<double>(i + 1);
      }
    }
  }
  finalize(out, "causal_mean");
  return out;
}

Tensor causal_mean_vjp(const Tensor& g) {
  require_rank_at_least(g, 2, "causal_mean_vjp");
  const std::size_t rows = g.dim(-2);
  const std::size_t cols = g.dim(-1);
  const std::size_t batch = g.size() / (rows * cols);
  Tensor out(g.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * rows * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (std::size_t i = rows; i-- > 0;) {
        s += g[base + i * cols + c] / static_cast<double>(i + 1);
        out[base + i * cols + c] = s;
      }
    }
  }
  finalize(out, "causal_mean_vjp");
  return out;
}

Tensor normalize(const Tensor& x, NormKind kind, std::span<const double> gain, std::span<const double> bias,
                 double eps) {
  check_norm_params(x, kind, gain, bias);
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double* yr = out.data().data() + r * d;
    if (kind == NormKind::layernorm) {
      double mean = 0.0;
      for (std::size_t i = 0; i < d; ++i) mean += xr[i];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t i = 0; i < d; ++i) yr[i] = (xr[i] - mean) * inv * gain[i] + (bias.empty() ? 0.0 : bias[i]);
    } else {
      double ms = 0.0;
      for (std::size_t i = 0; i < d; ++i) ms += xr[i] * xr[i];
      ms /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(ms + eps);
      for (std::size_t i = 0; i < d; ++i) yr[i] = xr[i] * inv * gain[i];
    }
  }
  finalize(out, "normalize");
  return out;
}

NormalizeGrads normalize_vjp(const Tensor& x, NormKind kind, std::span<const double> gain,
                             std::span<const double> bias, double eps, const Tensor& g) {
  check_norm_params(x, kind, gain, bias);
  require_same_shape(x, g, "normalize_vjp");
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.size() / d;
  const double n = static_cast<double>(d);
  NormalizeGrads grads{Tensor(x.shape()), Tensor({d}), Tensor({d})};
  std::vector<double> xhat(d), dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    const double* gr = g.data().data() + r * d;
    double* dx = grads.x.data().data() + r * d;
    double inv;
    if (kind == NormKind::layernorm) {
      double mean = 0.0;
      for (std::size_t i = 0; i < d; ++i) mean += xr[i];
      mean /= n;
      double var = 0.0;
      for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
      var /= n;
      inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t i = 0; i < d; ++i) xhat[i] = (xr[i] - mean) * inv;
    } else {
      double ms = 0.0;
      for (std::size_t i = 0; i < d; ++i) ms += xr[i] * xr[i];
      ms /= n;
      inv = 1.0 / std::sqrt(ms + eps);
      for (std::size_t i = 0; i < d; ++i) xhat[i] = xr[i] * inv;
    }
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dxhat[i] = gr[i] * gain[i];
      mean_dxhat += dxhat[i];
      mean_dxhat_xhat += dxhat[i] * xhat[i];
      grads.gain[i] += gr[i] * xhat[i];
      grads.bias[i] += gr[i];
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for (std::size_t i = 0; i < d; ++i) {
      const double centered = kind == NormKind::layernorm ? dxhat[i] - mean_dxhat : dxhat[i];
      dx[i] = inv * (centered - xhat[i] * mean_dxhat_xhat);
    }
  }
  if (kind == NormKind::rmsnorm || bias.empty()) grads.bias = Tensor();
  finalize(grads.x, "normalize_vjp");
  finalize(grads.gain, "normalize_vjp");
  finalize(grads.bias, "normalize_vjp");
  return grads;
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2, got " + shape_string(table.shape()));
  const std::size_t n = table.dim(0);
  const std::size_t d = table.dim(1);
  Tensor out({ids.size(), d});
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (ids[p] >= n) {
      throw RangeError("embedding: id " + std::to_string(ids[p]) + " at position " + std::to_string(p) +
                       " out of range for table with " + std::to_string(n) + " rows");
    }
    std::copy_n(table.data().begin() + static_cast<long>(ids[p] * d), d, out.data().begin() + static_cast<long>(p * d));
  }
  finalize(out, "embedding");
  return out;
}

Tensor embedding_vjp(const Shape& table_shape, std::span<const TokenId> ids, const Tensor& g) {
  Tensor out(table_shape);
  const std::size_t d = table_shape.at(1);
  if (g.size() != ids.size() * d) throw DimensionError("embedding_vjp: upstream gradient has wrong size");
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (ids[p] >= table_shape[0]) throw RangeError("embedding_vjp: id out of range");
    for (std::size_t i = 0; i < d; ++i) out[ids[p] * d + i] += g[p * d + i];
  }
  finalize(out, "embedding_vjp");
  return out;
}

Tensor split_heads(const Tensor& x, std::size_t n_heads) {
  if (x.rank() != 2 || n_heads == 0 || x.dim(1) % n_heads != 0) {
    throw DimensionError("split_heads: cannot split " + shape_string(x.shape()) + " into " +
                         std::to_string(n_heads) + " heads");
  }
  const std::size_t p_len = x.dim(0);
  const std::size_t hd = x.dim(1) / n_heads;
  Tensor out({n_heads, p_len, hd});
  for (std::size_t h = 0; h < n_heads; ++h)
    for (std::size_t p = 0; p < p_len; ++p)
      for (std::size_t i = 0; i < hd; ++i) out[(h * p_len + p) * hd + i] = x[p * n_heads * hd + h * hd + i];
  return out;
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("merge_heads: expected rank 3, got " + shape_string(x.shape()));
  const std::size_t n_heads = x.dim(0);
  const std::size_t p_len = x.dim(1);
  const std::size_t hd = x.dim(2);
  Tensor out({p_len, n_heads * hd});
  for (std::size_t h = 0; h < n_heads; ++h)
    for (std::size_t p = 0; p < p_len; ++p)
      for (std::size_t i = 0; i < hd; ++i) out[p * n_heads * hd + h * hd + i] = x[(h * p_len + p) * hd + i];
  return out;
}

Tensor rotary(const Tensor& x, std::size_t n_heads, double base, bool inverse) {
  if (x.rank() != 2 || n_heads == 0 || x.dim(1) % n_heads != 0 || (x.dim(1) / n_heads) % 2 != 0) {
    throw DimensionError("rotary: need [P, H*d] with even d, got " + shape_string(x.shape()));
  }
  const std::size_t p_len = x.dim(0);
  const std::size_t width = x.dim(1);
  const std::size_t hd = width / n_heads;
  Tensor out(x.shape());
  for (std::size_t p = 0; p < p_len; ++p) {
    for (std::size_t i = 0; i < hd / 2; ++i) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      const double angle = static_cast<double>(p) * freq;
      const double c = std::cos(angle);
      const double s = inverse ? -std::sin(angle) : std::sin(angle);
      for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t k = p * width + h * hd + 2 * i;
        const double x0 = x[k];
        const double x1 = x[k + 1];
        out[k] = x0 * c - x1 * s;
        out[k + 1] = x0 * s + x1 * c;
      }
    }
  }
  finalize(out, "rotary");
  return out;
}

namespace {

void check_self_entropy_args(const Tensor& logits, std::span<const TokenId> targets, std::size_t first_row,
                             std::size_t t_cut) {
  if (logits.rank() != 2) throw DimensionError("self_entropy: logits must be [P, V], got " + shape_string(logits.shape()));
  if (t_cut < 1 || first_row + t_cut > logits.dim(0) || t_cut > targets.size()) {
    throw RangeError("self_entropy: T_cut " + std::to_string(t_cut) + " out of range (rows available " +
                     std::to_string(logits.dim(0) - std::min(first_row, logits.dim(0))) + ", targets " +
                     std::to_string(targets.size()) + ")");
  }
  for (std::size_t t = 0; t < t_cut; ++t) {
    if (targets[t] >= logits.dim(1)) throw RangeError("self_entropy: target id out of vocabulary");
  }
}

}  // namespace

double self_entropy(const Tensor& logits, std::span<const TokenId> targets, std::size_t first_row,
                    std::size_t t_cut) {
  check_self_entropy_args(logits, targets, first_row, t_cut);
  const std::size_t v = logits.dim(1);
  double total = 0.0;
  for (std::size_t t = 0; t < t_cut; ++t) {
    const double* row = logits.data().data() + (first_row + t) * v;
    double m = row[0];
    for (std::size_t j = 1; j < v; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(row[j] - m);
    total += (m + std::log(s)) - row[targets[t]];
  }
  const double loss = total / static_cast<double>(t_cut);
  if (!std::isfinite(loss)) throw NumericError("self_entropy: non-finite loss");
  return loss;
}

double self_entropy_change(const Tensor& before, const Tensor& after, std::span<const TokenId> targets,
                           std::size_t first_row, std::size_t t_cut) {
  check_self_entropy_args(before, targets, first_row, t_cut);
  if (after.shape() != before.shape()) throw DimensionError("self_entropy_change: logit shapes differ");
  const std::size_t v = before.dim(1);
  double total = 0.0;
  for (std::size_t t = 0; t < t_cut; ++t) {
    const double* a = before.data().data() + (first_row + t) * v;
    const double* b = after.data().data() + (first_row + t) * v;
    double m = a[0], mb = b[0], spread = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      m = std::max(m, a[j]);
      mb = std::max(mb, b[j]);
      spread = std::max(spread, std::abs(b[j] - a[j]));
    }
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(a[j] - m);
    const double dz_target = b[targets[t]] - a[targets[t]];
    if (spread <= 0.5) {
      // log sum_j p_j exp(dz_j) with p = softmax(before); 1 + acc >= e^-0.5.
      double acc = 0.0;
      for (std::size_t j = 0; j < v; ++j) acc += std::exp(a[j] - m) / s * std::expm1(b[j] - a[j]);
      total += std::log1p(acc) - dz_target;
    } else {
      double sb = 0.0;
      for (std::size_t j = 0; j < v; ++j) sb += std::exp(b[j] - mb);
      total += (mb + std::log(sb)) - (m + std::log(s)) - dz_target;
    }
  }
  const double change = total / static_cast<double>(t_cut);
  if (!std::isfinite(change)) throw NumericError("self_entropy_change: non-finite result");
  return change;
}

Tensor self_entropy_vjp(const Tensor& logits, std::span<const TokenId> targets, std::size_t first_row,
                        std::size_t t_cut, double g) {
  check_self_entropy_args(logits, targets, first_row, t_cut);
  const std::size_t v = logits.dim(1);
  Tensor out(logits.shape());
  const double w = g / static_cast<double>(t_cut);
  for (std::size_t t = 0; t < t_cut; ++t) {
    const std::size_t r = first_row + t;
    const double* row = logits.data().data() + r * v;
    double m = row[0];
    for (std::size_t j = 1; j < v; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(row[j] - m);
    for (std::size_t j = 0; j < v; ++j) out[r * v + j] = w * std::exp(row[j] - m) / s;
    out[r * v + targets[t]] -= w;
  }
  finalize(out, "self_entropy_vjp");
  return out;
}

}  // namespace csc::ops
