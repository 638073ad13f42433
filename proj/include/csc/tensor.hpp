// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor of reals. Values are held as double; when the global
// precision is f32 every primitive rounds its result to the nearest float so
// downstream arithmetic sees single-precision inputs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csc {

using TokenId = std::uint32_t;
using Shape = std::vector<std::size_t>;

enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);
std::optional<Precision> parse_precision(std::string_view text);
std::string_view to_string(Precision p);

// Sets the global precision for the lifetime of the guard.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  // Rank-2 literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  // Extent along `axis`; negative axes count from the back.
  std::size_t dim(int axis) const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Element (i, j) of a rank-2 tensor.
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Rows [first, first + count) of a rank-2 tensor.
  Tensor rows(std::size_t first, std::size_t count) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

bool bit_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

// Throws NumericError naming `op` when any entry is NaN or Inf, then rounds to
// the global precision. Every primitive passes its result through this.
void finalize(Tensor& t, std::string_view op);

}  // namespace csc
